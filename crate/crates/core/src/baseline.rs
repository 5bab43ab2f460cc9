//! Recurrence-detection baseline: group jobs by DAG isomorphism (attributes
//! ignored), then split each group into clusters of periodically recurring
//! start times.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Clustering;
use crate::graph::{topological_levels, GraphError, JobGraph};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(
        "canonical keys of jobs {left} and {right} collide but the explicit \
         isomorphism check failed; canonical_form is defective"
    )]
    CanonicalMismatch { left: String, right: String },
}

/// Periods tried by the periodicity scan, ascending: 15 min, 1 h, 1 d.
pub const DEFAULT_PERIODS_S: [i64; 3] = [900, 3600, 86400];
/// Relative tolerance on each period multiple.
pub const DEFAULT_TOLERANCE: f64 = 0.03;

/// A relabeling-invariant key plus the node order that produced it
/// (`order[rank]` is the node's index in `graph.nodes`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub key: String,
    pub order: Vec<usize>,
}

/// Canonical key for structural isomorphism. Nodes are first colored by
/// (topological level, in-degree, out-degree), the coloring is refined by
/// sorted neighbor colors to a fixed point, and remaining symmetric cells are
/// resolved by individualization with backtracking; the key is the
/// lexicographically smallest adjacency serialization over all branches.
pub fn canonical_form(graph: &JobGraph) -> Result<CanonicalForm, GraphError> {
    let adj = graph.adjacency()?;
    let levels = topological_levels(graph)?;
    let n = graph.nodes.len();
    let triples: Vec<(usize, usize, usize)> = (0..n)
        .map(|i| (levels[i], adj.in_neighbors[i].len(), adj.out_neighbors[i].len()))
        .collect();
    let mut palette: Vec<(usize, usize, usize)> = triples.clone();
    palette.sort_unstable();
    palette.dedup();
    let colors: Vec<u32> = triples
        .iter()
        .map(|t| palette.binary_search(t).unwrap() as u32)
        .collect();
    let searcher = Searcher {
        inc: &adj.in_neighbors,
        out: &adj.out_neighbors,
    };
    let mut best: Option<CanonicalForm> = None;
    searcher.search(refine(&searcher, colors), &mut best);
    Ok(best.expect("search always yields at least one ordering"))
}

struct Searcher<'a> {
    inc: &'a [Vec<usize>],
    out: &'a [Vec<usize>],
}

/// Refine colors by (own color, sorted in-neighbor colors, sorted
/// out-neighbor colors) until the number of classes stops growing. Classes
/// only ever split, so a stable count means a stable partition.
fn refine(s: &Searcher, mut colors: Vec<u32>) -> Vec<u32> {
    let n = colors.len();
    let mut n_classes = count_classes(&colors);
    loop {
        let sigs: Vec<(u32, Vec<u32>, Vec<u32>)> = (0..n)
            .map(|i| {
                let mut inc: Vec<u32> = s.inc[i].iter().map(|&j| colors[j]).collect();
                let mut out: Vec<u32> = s.out[i].iter().map(|&j| colors[j]).collect();
                inc.sort_unstable();
                out.sort_unstable();
                (colors[i], inc, out)
            })
            .collect();
        let mut palette = sigs.clone();
        palette.sort_unstable();
        palette.dedup();
        colors = sigs
            .iter()
            .map(|sig| palette.binary_search(sig).unwrap() as u32)
            .collect();
        let next = palette.len();
        if next == n_classes {
            return colors;
        }
        n_classes = next;
    }
}

fn count_classes(colors: &[u32]) -> usize {
    let mut seen: Vec<u32> = colors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

impl Searcher<'_> {
    fn search(&self, colors: Vec<u32>, best: &mut Option<CanonicalForm>) {
        match self.smallest_nonsingleton_cell(&colors) {
            None => {
                let candidate = self.serialize(&colors);
                if best.as_ref().map_or(true, |b| candidate.key < b.key) {
                    *best = Some(candidate);
                }
            }
            Some(cell) => {
                for &node in self.twin_representatives(&cell) {
                    let mut branched = colors.clone();
                    branched[node] = colors.len() as u32 + colors[node];
                    self.search(refine(self, branched), best);
                }
            }
        }
    }

    fn smallest_nonsingleton_cell(&self, colors: &[u32]) -> Option<Vec<usize>> {
        let mut cells: HashMap<u32, Vec<usize>> = HashMap::new();
        for (i, &c) in colors.iter().enumerate() {
            cells.entry(c).or_default().push(i);
        }
        cells
            .into_iter()
            .filter(|(_, members)| members.len() > 1)
            .min_by_key(|&(c, _)| c)
            .map(|(_, members)| members)
    }

    /// One representative per set of mutually substitutable nodes: nodes of a
    /// cell with identical in- and out-neighbor sets are swapped by an
    /// automorphism, so branching on one of them suffices.
    fn twin_representatives<'c>(&self, cell: &'c [usize]) -> Vec<&'c usize> {
        let mut reps: Vec<(&Vec<usize>, &Vec<usize>, &usize)> = Vec::new();
        let mut out = Vec::new();
        for node in cell {
            let sig = (&self.inc[*node], &self.out[*node], node);
            if !reps
                .iter()
                .any(|(i, o, _)| sorted_eq(i, sig.0) && sorted_eq(o, sig.1))
            {
                reps.push(sig);
                out.push(node);
            }
        }
        out
    }

    fn serialize(&self, colors: &[u32]) -> CanonicalForm {
        let n = colors.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| colors[i]);
        let mut rank = vec![0usize; n];
        for (r, &node) in order.iter().enumerate() {
            rank[node] = r;
        }
        let mut key = format!("n={n}");
        for &node in &order {
            let mut targets: Vec<usize> = self.out[node].iter().map(|&j| rank[j]).collect();
            targets.sort_unstable();
            key.push(';');
            for (k, t) in targets.iter().enumerate() {
                if k > 0 {
                    key.push(',');
                }
                key.push_str(&t.to_string());
            }
        }
        CanonicalForm { key, order }
    }
}

fn sorted_eq(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// One member of an isomorphism group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoMember {
    /// Index into the job list handed to `group_isomorphic`.
    pub index: usize,
    pub job_name: String,
    /// Job start: minimum task start time.
    pub start_time: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoGroup {
    pub canonical_key: String,
    pub members: Vec<IsoMember>,
}

/// Bucket jobs by canonical key, in order of first appearance. Every bucket
/// is additionally confirmed against its first member by an explicit
/// node-mapping check, turning a canonicalization defect into a hard error
/// instead of a silent misgrouping.
pub fn group_isomorphic(jobs: &[JobGraph]) -> Result<Vec<IsoGroup>, BaselineError> {
    let mut groups: Vec<IsoGroup> = Vec::new();
    let mut by_key: HashMap<String, usize> = HashMap::new();
    let mut representative: Vec<(usize, CanonicalForm)> = Vec::new();
    for (index, job) in jobs.iter().enumerate() {
        let form = canonical_form(job)?;
        let member = IsoMember {
            index,
            job_name: job.job_name.clone(),
            start_time: job.nodes.iter().map(|n| n.start_time).min().unwrap_or(0),
        };
        match by_key.get(&form.key) {
            Some(&g) => {
                let (rep_index, rep_form) = &representative[g];
                confirm_isomorphic(&jobs[*rep_index], rep_form, job, &form)?;
                groups[g].members.push(member);
            }
            None => {
                by_key.insert(form.key.clone(), groups.len());
                groups.push(IsoGroup {
                    canonical_key: form.key.clone(),
                    members: vec![member],
                });
                representative.push((index, form));
            }
        }
    }
    Ok(groups)
}

/// Verify that mapping nodes by canonical rank carries one edge set exactly
/// onto the other.
fn confirm_isomorphic(
    a: &JobGraph,
    form_a: &CanonicalForm,
    b: &JobGraph,
    form_b: &CanonicalForm,
) -> Result<(), BaselineError> {
    let mismatch = || BaselineError::CanonicalMismatch {
        left: a.job_name.clone(),
        right: b.job_name.clone(),
    };
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() {
        return Err(mismatch());
    }
    let ranked_edges = |g: &JobGraph, form: &CanonicalForm| -> Result<Vec<(usize, usize)>, BaselineError> {
        let index = g.index_of_id();
        let mut rank = vec![0usize; g.nodes.len()];
        for (r, &node) in form.order.iter().enumerate() {
            rank[node] = r;
        }
        let mut edges = Vec::with_capacity(g.edges.len());
        for &(from, to) in &g.edges {
            let (fi, ti) = (index[&from], index[&to]);
            edges.push((rank[fi], rank[ti]));
        }
        edges.sort_unstable();
        Ok(edges)
    };
    if ranked_edges(a, form_a)? != ranked_edges(b, form_b)? {
        return Err(mismatch());
    }
    Ok(())
}

/// Result of the periodicity scan over one isomorphism group: clusters of
/// member positions (into `IsoGroup::members`) plus the unclustered rest.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSplit {
    pub clusters: Vec<Vec<usize>>,
    pub leftovers: Vec<usize>,
}

/// Split a group into periodic clusters. Members are scanned in start-time
/// order; for each period in the given order, maximal runs whose consecutive
/// gaps are within `tolerance` of an integer multiple of the period form
/// clusters (k = 1 only when `strict`), and clustered members leave the pool
/// before the next period is tried.
pub fn periodic_clusters(
    group: &IsoGroup,
    periods: &[i64],
    tolerance: f64,
    strict: bool,
) -> PeriodicSplit {
    let mut pool: Vec<usize> = (0..group.members.len()).collect();
    pool.sort_by(|&a, &b| {
        let ma = &group.members[a];
        let mb = &group.members[b];
        ma.start_time
            .cmp(&mb.start_time)
            .then_with(|| ma.job_name.cmp(&mb.job_name))
    });
    let mut clusters = Vec::new();
    for &period in periods {
        let mut kept = Vec::new();
        let mut run: Vec<usize> = Vec::new();
        for &pos in &pool {
            let extend = run.last().map_or(false, |&prev| {
                let delta =
                    (group.members[pos].start_time - group.members[prev].start_time) as f64;
                gap_matches(delta, period as f64, tolerance, strict)
            });
            if extend || run.is_empty() {
                run.push(pos);
            } else {
                close_run(&mut run, &mut clusters, &mut kept);
                run.push(pos);
            }
        }
        close_run(&mut run, &mut clusters, &mut kept);
        pool = kept;
        if pool.is_empty() {
            break;
        }
    }
    PeriodicSplit {
        clusters,
        leftovers: pool,
    }
}

fn close_run(run: &mut Vec<usize>, clusters: &mut Vec<Vec<usize>>, kept: &mut Vec<usize>) {
    if run.len() >= 2 {
        clusters.push(std::mem::take(run));
    } else {
        kept.append(run);
    }
}

/// Does the gap equal some k-th multiple of the period within tolerance
/// (k = 1 only, under strict)?
fn gap_matches(delta: f64, period: f64, tolerance: f64, strict: bool) -> bool {
    if delta <= 0.0 {
        return false;
    }
    if strict {
        return (delta - period).abs() <= tolerance * period;
    }
    let lo = ((delta / (period * (1.0 + tolerance))).floor() as i64 - 1).max(1);
    let hi = (delta / (period * (1.0 - tolerance))).ceil() as i64 + 1;
    (lo..=hi).any(|k| {
        let kp = k as f64 * period;
        (delta - kp).abs() <= tolerance * kp
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub periods_s: [i64; 3],
    pub tolerance: f64,
    pub strict_consecutive: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            periods_s: DEFAULT_PERIODS_S,
            tolerance: DEFAULT_TOLERANCE,
            strict_consecutive: false,
        }
    }
}

/// Full baseline: isomorphism groups, then periodic clusters, flattened into
/// one label vector aligned with `jobs` (-1 for outliers). Cluster ids are
/// assigned in group order, then discovery order within the group.
pub fn baseline_clustering(
    jobs: &[JobGraph],
    cfg: &BaselineConfig,
) -> Result<Clustering, BaselineError> {
    let groups = group_isomorphic(jobs)?;
    let mut labels = vec![Clustering::NOISE; jobs.len()];
    let mut next = 0i64;
    for group in &groups {
        let split = periodic_clusters(group, &cfg.periods_s, cfg.tolerance, cfg.strict_consecutive);
        for cluster in &split.clusters {
            for &pos in cluster {
                labels[group.members[pos].index] = next;
            }
            next += 1;
        }
    }
    Ok(Clustering {
        labels,
        eps: f64::NAN,
        min_samples: 2,
    })
}

//! Synthetic trace generation with ground-truth recurrent job families.
//!
//! Each family owns a random layered DAG template; recurrences reuse the
//! template with jittered node attributes and start times spaced one period
//! apart. Noise jobs get fresh topologies, checked non-isomorphic against
//! every family template.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::canonical_form;
use crate::graph::{JobGraph, JobNode};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("could not draw a fresh topology after {0} attempts; widen topology_size_range")]
    TopologyCollision(usize),
}

/// All job start times sit above this base so no generated task ever carries
/// the zero "undefined time" marker.
const EPOCH_S: i64 = 86_400;
/// Base runtime multiplier for a family that shares another family's
/// topology, keeping the two runtime distributions well separated.
const SHARER_RUNTIME_FACTOR: f64 = 1.6;
const MAX_TOPOLOGY_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    /// Per-family base runtime drawn uniformly from this range (seconds).
    pub base_range_s: (f64, f64),
    /// Each recurrence's runtime is base * (1 +- noise_frac).
    pub noise_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_families: usize,
    pub recurrences_per_family: usize,
    pub n_noise_jobs: usize,
    /// One of 900, 3600, 86400 seconds.
    pub period_s: i64,
    /// Multiplicative attribute jitter per node and attribute, in [0, 1).
    pub attr_jitter: f64,
    pub topology_size_range: (usize, usize),
    pub runtime_model: RuntimeModel,
    /// Bound on the consecutive-gap deviation as a fraction of the period;
    /// each occurrence is jittered by half of it so gaps stay recoverable by
    /// a 3% periodicity tolerance whenever this is <= 0.03.
    pub start_jitter_frac: f64,
    /// Fraction of families that clone another family's topology (attributes
    /// and runtimes still differ). At most half the families can be cloners.
    pub shared_topology_frac: f64,
    /// plan_cpu multiplier applied to topology-sharing families.
    pub shared_cpu_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_families: 10,
            recurrences_per_family: 10,
            n_noise_jobs: 50,
            period_s: 3600,
            attr_jitter: 0.05,
            topology_size_range: (10, 30),
            runtime_model: RuntimeModel {
                base_range_s: (120.0, 1800.0),
                noise_frac: 0.05,
            },
            start_jitter_frac: 0.015,
            shared_topology_frac: 0.0,
            shared_cpu_scale: 10.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: &str| Err(SynthError::InvalidSpec(msg.to_string()));
        if self.n_families < 1 {
            return fail("n_families must be >= 1");
        }
        if self.recurrences_per_family < 2 {
            return fail("recurrences_per_family must be >= 2 (min_samples=2 needs pairs)");
        }
        if ![900, 3600, 86_400].contains(&self.period_s) {
            return fail("period_s must be one of 900, 3600, 86400");
        }
        if !(0.0..1.0).contains(&self.attr_jitter) {
            return fail("attr_jitter must lie in [0, 1)");
        }
        let (lo, hi) = self.topology_size_range;
        if lo < 1 || lo > hi {
            return fail("topology_size_range must satisfy 1 <= min <= max");
        }
        let (blo, bhi) = self.runtime_model.base_range_s;
        if !(blo > 0.0 && blo <= bhi) {
            return fail("runtime base range must satisfy 0 < min <= max");
        }
        if !(0.0..1.0).contains(&self.runtime_model.noise_frac) {
            return fail("runtime noise_frac must lie in [0, 1)");
        }
        if !(0.0..=0.03).contains(&self.start_jitter_frac) {
            return fail("start_jitter_frac must lie in [0, 0.03] to stay inside the periodicity tolerance");
        }
        if !(0.0..=0.5).contains(&self.shared_topology_frac) {
            return fail("shared_topology_frac must lie in [0, 0.5]");
        }
        if self.shared_cpu_scale <= 0.0 {
            return fail("shared_cpu_scale must be > 0");
        }
        Ok(())
    }
}

/// Ground truth for one generated job: family index, or -1 for noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLabel {
    pub job_name: String,
    pub family: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub jobs: Vec<JobGraph>,
    pub ground_truth: Vec<SynthLabel>,
}

struct Template {
    n: usize,
    edges: Vec<(i64, i64)>,
    attrs: Vec<[f64; 3]>,
}

struct Family {
    template: usize,
    cpu_scale: f64,
    base_runtime_s: f64,
    offset_s: i64,
}

pub fn generate_synthetic_trace(spec: &SynthSpec, seed: u64) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sharers = (spec.shared_topology_frac * spec.n_families as f64).ceil() as usize;
    let n_unique = spec.n_families - n_sharers;

    let mut templates = Vec::with_capacity(n_unique);
    let mut template_keys = HashSet::new();
    for _ in 0..n_unique {
        let template = fresh_template(&mut rng, spec, &mut template_keys)?;
        templates.push(template);
    }

    let mut families = Vec::with_capacity(spec.n_families);
    for f in 0..n_unique {
        families.push(Family {
            template: f,
            cpu_scale: 1.0,
            base_runtime_s: draw_range(&mut rng, spec.runtime_model.base_range_s),
            offset_s: rng.gen_range(0..spec.period_s),
        });
    }
    for s in 0..n_sharers {
        let source = &families[s % n_unique];
        families.push(Family {
            template: source.template,
            cpu_scale: spec.shared_cpu_scale,
            base_runtime_s: source.base_runtime_s * SHARER_RUNTIME_FACTOR,
            offset_s: source.offset_s + spec.period_s / 2,
        });
    }

    let mut jobs = Vec::new();
    let mut ground_truth = Vec::new();
    for (f, family) in families.iter().enumerate() {
        let template = &templates[family.template];
        for k in 0..spec.recurrences_per_family {
            let name = format!("f{f:03}_r{k:03}");
            let start = EPOCH_S
                + family.offset_s
                + k as i64 * spec.period_s
                + jitter(&mut rng, spec.start_jitter_frac / 2.0 * spec.period_s as f64) as i64;
            let runtime = (family.base_runtime_s
                * (1.0 + jitter(&mut rng, spec.runtime_model.noise_frac)))
            .round()
            .max(1.0) as i64;
            jobs.push(instantiate(
                &name,
                template,
                family.cpu_scale,
                spec.attr_jitter,
                start,
                runtime,
                &mut rng,
            ));
            ground_truth.push(SynthLabel {
                job_name: name,
                family: f as i64,
            });
        }
    }

    let span = spec.period_s * (spec.recurrences_per_family as i64 + 1);
    for i in 0..spec.n_noise_jobs {
        let mut keys = template_keys.clone();
        let template = fresh_template(&mut rng, spec, &mut keys)?;
        let name = format!("noise_{i:04}");
        let start = EPOCH_S + rng.gen_range(0..=span);
        let base = draw_range(&mut rng, spec.runtime_model.base_range_s);
        let runtime = (base * (1.0 + jitter(&mut rng, spec.runtime_model.noise_frac)))
            .round()
            .max(1.0) as i64;
        jobs.push(instantiate(&name, &template, 1.0, 0.0, start, runtime, &mut rng));
        ground_truth.push(SynthLabel {
            job_name: name,
            family: -1,
        });
    }

    Ok(SynthOutput { jobs, ground_truth })
}

fn draw_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn jitter(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.gen_range(-half_width..half_width)
    }
}

/// Draw a topology whose canonical key is not yet taken, registering it.
fn fresh_template(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    taken: &mut HashSet<String>,
) -> Result<Template, SynthError> {
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let (lo, hi) = spec.topology_size_range;
        let n = rng.gen_range(lo..=hi);
        let edges = random_layered_edges(rng, n);
        let probe = JobGraph {
            job_name: String::new(),
            nodes: (1..=n as i64)
                .map(|id| JobNode {
                    task_id: id,
                    features: [1.0, 1.0, 1.0],
                    start_time: 1,
                    end_time: 2,
                })
                .collect(),
            edges: edges.clone(),
        };
        let key = canonical_form(&probe)
            .expect("layered construction is acyclic")
            .key;
        if taken.insert(key) {
            let attrs = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(50.0..800.0),
                        rng.gen_range(0.1..8.0),
                        rng.gen_range(1..=64) as f64,
                    ]
                })
                .collect();
            return Ok(Template { n, edges, attrs });
        }
    }
    Err(SynthError::TopologyCollision(MAX_TOPOLOGY_ATTEMPTS))
}

/// Random DAG with nodes assigned to levels and every non-source node wired
/// to 1..=3 parents on strictly lower levels; acyclic by construction.
fn random_layered_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(i64, i64)> {
    if n < 2 {
        return Vec::new();
    }
    let max_levels = (n / 2).clamp(2, 8);
    let n_levels = rng.gen_range(2..=max_levels);
    let mut levels = vec![0usize; n];
    for level in levels.iter_mut().skip(1) {
        *level = rng.gen_range(0..n_levels);
    }
    let mut present = levels.clone();
    present.sort_unstable();
    present.dedup();
    for level in &mut levels {
        *level = present.binary_search(level).unwrap();
    }
    let mut edges = Vec::new();
    for v in 0..n {
        if levels[v] == 0 {
            continue;
        }
        let candidates: Vec<usize> = (0..n).filter(|&u| levels[u] < levels[v]).collect();
        let k = rng.gen_range(1..=candidates.len().min(3));
        let mut parents: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), k)
            .iter()
            .map(|i| candidates[i])
            .collect();
        parents.sort_unstable();
        for p in parents {
            edges.push((p as i64 + 1, v as i64 + 1));
        }
    }
    edges
}

fn instantiate(
    name: &str,
    template: &Template,
    cpu_scale: f64,
    attr_jitter: f64,
    start: i64,
    runtime_s: i64,
    rng: &mut ChaCha8Rng,
) -> JobGraph {
    let nodes = (0..template.n)
        .map(|v| {
            let base = template.attrs[v];
            let mut features = [
                base[0] * cpu_scale * (1.0 + jitter(rng, attr_jitter)),
                base[1] * (1.0 + jitter(rng, attr_jitter)),
                base[2] * (1.0 + jitter(rng, attr_jitter)),
            ];
            features[1] = features[1].min(100.0);
            JobNode {
                task_id: v as i64 + 1,
                features,
                start_time: start,
                end_time: start + runtime_s,
            }
        })
        .collect();
    JobGraph {
        job_name: name.to_string(),
        nodes,
        edges: template.edges.clone(),
    }
}

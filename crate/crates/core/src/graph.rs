//! Attributed job DAGs and per-graph structural computations.
//!
//! A [`JobGraph`] is one batch job: nodes are tasks carrying a three-entry
//! feature vector (planned CPU, planned memory, instance count) plus start and
//! end times, and directed edges point from a parent task to the task that
//! depends on it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of node features (planned CPU, planned memory, instance count).
pub const NODE_FEATURES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle involving tasks {0:?}")]
    Cycle(Vec<i64>),
    #[error("edge ({from}, {to}) references a task id that is not in the graph")]
    UnknownNode { from: i64, to: i64 },
    #[error("graph has no nodes")]
    Empty,
    #[error("node id mapping is not a bijection over the graph's task ids")]
    NotABijection,
}

/// One task of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobNode {
    pub task_id: i64,
    /// `[plan_cpu, plan_mem, instance_num]`; 100 plan_cpu means one core.
    pub features: [f64; NODE_FEATURES],
    pub start_time: i64,
    pub end_time: i64,
}

/// An attributed DAG for one batch job. Edges run parent -> dependent task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobGraph {
    pub job_name: String,
    pub nodes: Vec<JobNode>,
    pub edges: Vec<(i64, i64)>,
}

impl JobGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Map from task id to position in `nodes`. Later duplicates are ignored;
    /// graphs with duplicate ids are flagged at build time and dropped by
    /// cleaning before anything else consumes them.
    pub fn index_of_id(&self) -> HashMap<i64, usize> {
        let mut map = HashMap::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            map.entry(node.task_id).or_insert(idx);
        }
        map
    }

    /// Out- and in-adjacency lists over node indices.
    ///
    /// Errors if an edge endpoint references an id that is not a node.
    pub fn adjacency(&self) -> Result<Adjacency, GraphError> {
        let index = self.index_of_id();
        let n = self.nodes.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for &(from, to) in &self.edges {
            let (fi, ti) = match (index.get(&from), index.get(&to)) {
                (Some(&fi), Some(&ti)) => (fi, ti),
                _ => return Err(GraphError::UnknownNode { from, to }),
            };
            out[fi].push(ti);
            inc[ti].push(fi);
        }
        Ok(Adjacency {
            out_neighbors: out,
            in_neighbors: inc,
        })
    }
}

/// Adjacency lists over node indices (positions in `JobGraph::nodes`).
#[derive(Debug, Clone)]
pub struct Adjacency {
    pub out_neighbors: Vec<Vec<usize>>,
    pub in_neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn node_count(&self) -> usize {
        self.out_neighbors.len()
    }

    /// Union of in- and out-neighbors per node. In a DAG the two sets are
    /// disjoint, so this is a plain concatenation (kept sorted for
    /// deterministic float summation downstream).
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        self.out_neighbors
            .iter()
            .zip(&self.in_neighbors)
            .map(|(out, inc)| {
                let mut both: Vec<usize> = out.iter().chain(inc).copied().collect();
                both.sort_unstable();
                both.dedup();
                both
            })
            .collect()
    }
}

/// Kahn-style topological validation. Ok iff consuming zero-in-degree nodes
/// exhausts the graph; otherwise the leftover node ids (one cycle-carrying
/// set) are reported.
pub fn validate_dag(graph: &JobGraph) -> Result<(), GraphError> {
    let adj = graph.adjacency()?;
    let order = kahn_order(&adj);
    if order.len() == graph.nodes.len() {
        Ok(())
    } else {
        let mut seen = vec![false; graph.nodes.len()];
        for &i in &order {
            seen[i] = true;
        }
        let leftover: Vec<i64> = graph
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !seen[*i])
            .map(|(_, node)| node.task_id)
            .collect();
        Err(GraphError::Cycle(leftover))
    }
}

fn kahn_order(adj: &Adjacency) -> Vec<usize> {
    let n = adj.node_count();
    let mut in_deg: Vec<usize> = adj.in_neighbors.iter().map(Vec::len).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| in_deg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        order.push(v);
        for &w in &adj.out_neighbors[v] {
            in_deg[w] -= 1;
            if in_deg[w] == 0 {
                queue.push(w);
            }
        }
    }
    order
}

/// Topological level per node: 0 for sources, else one more than the deepest
/// predecessor. Node order matches `graph.nodes`.
pub fn topological_levels(graph: &JobGraph) -> Result<Vec<usize>, GraphError> {
    let adj = graph.adjacency()?;
    let order = kahn_order(&adj);
    if order.len() != graph.nodes.len() {
        return validate_dag(graph).map(|_| unreachable!());
    }
    let mut levels = vec![0usize; graph.nodes.len()];
    for &v in &order {
        for &w in &adj.out_neighbors[v] {
            levels[w] = levels[w].max(levels[v] + 1);
        }
    }
    Ok(levels)
}

/// Job runtime in seconds: max task end time minus min task start time.
pub fn job_runtime(graph: &JobGraph) -> Result<i64, GraphError> {
    if graph.nodes.is_empty() {
        return Err(GraphError::Empty);
    }
    let start = graph.nodes.iter().map(|n| n.start_time).min().unwrap();
    let end = graph.nodes.iter().map(|n| n.end_time).max().unwrap();
    Ok(end - start)
}

/// Relabel node ids through a bijection. The mapping must cover every task id
/// exactly once and map to pairwise-distinct ids. Output nodes are sorted by
/// new id and edges sorted, so a permuted graph also exercises different
/// iteration orders downstream.
pub fn permute_nodes(graph: &JobGraph, mapping: &BTreeMap<i64, i64>) -> Result<JobGraph, GraphError> {
    if mapping.len() != graph.nodes.len() {
        return Err(GraphError::NotABijection);
    }
    let mut images: Vec<i64> = mapping.values().copied().collect();
    images.sort_unstable();
    images.dedup();
    if images.len() != mapping.len() {
        return Err(GraphError::NotABijection);
    }
    let mut nodes = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let new_id = *mapping.get(&node.task_id).ok_or(GraphError::NotABijection)?;
        let mut relabeled = node.clone();
        relabeled.task_id = new_id;
        nodes.push(relabeled);
    }
    nodes.sort_by_key(|n| n.task_id);
    let mut edges = Vec::with_capacity(graph.edges.len());
    for &(from, to) in &graph.edges {
        let f = *mapping.get(&from).ok_or(GraphError::NotABijection)?;
        let t = *mapping.get(&to).ok_or(GraphError::NotABijection)?;
        edges.push((f, t));
    }
    edges.sort_unstable();
    Ok(JobGraph {
        job_name: graph.job_name.clone(),
        nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn graph_from_edges(n: usize, edges: &[(i64, i64)]) -> JobGraph {
        let nodes = (1..=n as i64)
            .map(|id| JobNode {
                task_id: id,
                features: [100.0, 1.0, 1.0],
                start_time: 10,
                end_time: 20,
            })
            .collect();
        JobGraph {
            job_name: "j".into(),
            nodes,
            edges: edges.to_vec(),
        }
    }

    #[test]
    fn chain_is_a_valid_dag() {
        let g = graph_from_edges(3, &[(1, 2), (2, 3)]);
        assert!(validate_dag(&g).is_ok());
    }

    #[test]
    fn two_cycle_is_rejected_with_offenders() {
        let g = graph_from_edges(2, &[(1, 2), (2, 1)]);
        match validate_dag(&g) {
            Err(GraphError::Cycle(nodes)) => {
                assert_eq!(nodes, vec![1, 2]);
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn edgeless_graph_is_valid() {
        let g = graph_from_edges(10, &[]);
        assert!(validate_dag(&g).is_ok());
    }

    #[test]
    fn edge_to_missing_node_is_reported() {
        let g = graph_from_edges(2, &[(1, 5)]);
        assert_eq!(
            validate_dag(&g),
            Err(GraphError::UnknownNode { from: 1, to: 5 })
        );
    }

    #[test]
    fn levels_of_chain_star_diamond() {
        let chain = graph_from_edges(3, &[(1, 2), (2, 3)]);
        assert_eq!(topological_levels(&chain).unwrap(), vec![0, 1, 2]);

        let star = graph_from_edges(4, &[(1, 2), (1, 3), (1, 4)]);
        assert_eq!(topological_levels(&star).unwrap(), vec![0, 1, 1, 1]);

        let diamond = graph_from_edges(4, &[(1, 2), (1, 3), (2, 4), (3, 4)]);
        assert_eq!(topological_levels(&diamond).unwrap(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn runtime_spans_min_start_to_max_end() {
        let mut g = graph_from_edges(2, &[]);
        g.nodes[0].start_time = 100;
        g.nodes[0].end_time = 200;
        g.nodes[1].start_time = 150;
        g.nodes[1].end_time = 400;
        assert_eq!(job_runtime(&g).unwrap(), 300);
    }

    #[test]
    fn runtime_of_single_task() {
        let mut g = graph_from_edges(1, &[]);
        g.nodes[0].start_time = 0;
        g.nodes[0].end_time = 60;
        assert_eq!(job_runtime(&g).unwrap(), 60);
    }

    #[test]
    fn runtime_of_identical_intervals() {
        let mut g = graph_from_edges(3, &[]);
        for node in &mut g.nodes {
            node.start_time = 50;
            node.end_time = 50 + 17;
        }
        assert_eq!(job_runtime(&g).unwrap(), 17);
    }

    #[test]
    fn empty_graph_has_no_runtime() {
        let g = JobGraph {
            job_name: "e".into(),
            nodes: vec![],
            edges: vec![],
        };
        assert_eq!(job_runtime(&g), Err(GraphError::Empty));
    }

    #[test]
    fn identity_permutation_is_a_noop_on_sorted_graphs() {
        let g = graph_from_edges(3, &[(1, 2), (2, 3)]);
        let identity: BTreeMap<i64, i64> = (1..=3).map(|i| (i, i)).collect();
        assert_eq!(permute_nodes(&g, &identity).unwrap(), g);
    }

    #[test]
    fn permutation_composed_with_inverse_restores_graph() {
        let g = graph_from_edges(4, &[(1, 2), (1, 3), (3, 4)]);
        let fwd: BTreeMap<i64, i64> = [(1, 3), (2, 1), (3, 4), (4, 2)].into();
        let inv: BTreeMap<i64, i64> = fwd.iter().map(|(&a, &b)| (b, a)).collect();
        let there = permute_nodes(&g, &fwd).unwrap();
        let back = permute_nodes(&there, &inv).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn non_bijective_mapping_is_rejected() {
        let g = graph_from_edges(2, &[(1, 2)]);
        let squash: BTreeMap<i64, i64> = [(1, 7), (2, 7)].into();
        assert_eq!(permute_nodes(&g, &squash), Err(GraphError::NotABijection));
    }
}

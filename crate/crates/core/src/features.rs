//! Static structural and attribute features of a job DAG.
//!
//! Twenty features summarize one graph; the job runtime is carried alongside
//! as the prediction target but is not itself a feature. Column order is part
//! of the on-disk contract and must not change.

use serde::{Deserialize, Serialize};

use crate::graph::{job_runtime, topological_levels, GraphError, JobGraph};

/// Fixed feature order used everywhere a feature matrix or CSV appears.
pub const FEATURE_NAMES: [&str; 20] = [
    "node_count",
    "edge_count",
    "density",
    "avg_degree",
    "max_in_degree",
    "max_out_degree",
    "source_count",
    "sink_count",
    "longest_path_len",
    "depth_ratio",
    "level_count",
    "max_level_width",
    "total_instance_num",
    "avg_instance_num",
    "max_instance_num",
    "total_plan_cpu",
    "avg_plan_cpu",
    "total_plan_mem",
    "avg_plan_mem",
    "weak_component_count",
];

/// One job's static features plus its runtime target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatureVector {
    pub job_name: String,
    pub values: [f64; 20],
    pub runtime_s: f64,
}

impl GraphFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values[i])
    }
}

/// Compute all twenty features for one validated DAG.
///
/// Degree conventions: density is `m / (n * (n - 1))` (directed, no self
/// loops) and zero for a single node; average degree counts each edge at both
/// endpoints, `2m / n`. Longest path length is in edges. `depth_ratio` is
/// longest path over `n - 1`, zero for a single node.
pub fn extract_static_features(graph: &JobGraph) -> Result<GraphFeatureVector, GraphError> {
    if graph.nodes.is_empty() {
        return Err(GraphError::Empty);
    }
    let n = graph.node_count();
    let m = graph.edge_count();
    let adj = graph.adjacency()?;
    let levels = topological_levels(graph)?;
    let runtime = job_runtime(graph)? as f64;

    let nf = n as f64;
    let mf = m as f64;
    let density = if n > 1 { mf / (nf * (nf - 1.0)) } else { 0.0 };
    let avg_degree = 2.0 * mf / nf;
    let max_in_degree = adj.in_neighbors.iter().map(Vec::len).max().unwrap() as f64;
    let max_out_degree = adj.out_neighbors.iter().map(Vec::len).max().unwrap() as f64;
    let source_count = adj.in_neighbors.iter().filter(|v| v.is_empty()).count() as f64;
    let sink_count = adj.out_neighbors.iter().filter(|v| v.is_empty()).count() as f64;

    let longest_path = *levels.iter().max().unwrap();
    let depth_ratio = if n > 1 {
        longest_path as f64 / (nf - 1.0)
    } else {
        0.0
    };
    let level_count = (longest_path + 1) as f64;
    let mut width = vec![0usize; longest_path + 1];
    for &l in &levels {
        width[l] += 1;
    }
    let max_level_width = *width.iter().max().unwrap() as f64;

    let mut total_cpu = 0.0;
    let mut total_mem = 0.0;
    let mut total_inst = 0.0;
    let mut max_inst = f64::MIN;
    for node in &graph.nodes {
        total_cpu += node.features[0];
        total_mem += node.features[1];
        total_inst += node.features[2];
        max_inst = max_inst.max(node.features[2]);
    }

    let components = weak_component_count(graph)? as f64;

    Ok(GraphFeatureVector {
        job_name: graph.job_name.clone(),
        values: [
            nf,
            mf,
            density,
            avg_degree,
            max_in_degree,
            max_out_degree,
            source_count,
            sink_count,
            longest_path as f64,
            depth_ratio,
            level_count,
            max_level_width,
            total_inst,
            total_inst / nf,
            max_inst,
            total_cpu,
            total_cpu / nf,
            total_mem,
            total_mem / nf,
            components,
        ],
        runtime_s: runtime,
    })
}

/// Number of weakly connected components (edges taken as undirected).
pub fn weak_component_count(graph: &JobGraph) -> Result<usize, GraphError> {
    let adj = graph.adjacency()?;
    let n = adj.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (v, outs) in adj.out_neighbors.iter().enumerate() {
        for &w in outs {
            let (rv, rw) = (find(&mut parent, v), find(&mut parent, w));
            if rv != rw {
                parent[rv] = rw;
            }
        }
    }
    let mut count = 0;
    for v in 0..n {
        if find(&mut parent, v) == v {
            count += 1;
        }
    }
    Ok(count)
}

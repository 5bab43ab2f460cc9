//! Embedding preprocessing and density-based clustering.
//!
//! Embeddings are standardized per column, then each row is scaled to unit
//! norm; DBSCAN runs on the result with exhaustive pairwise distances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Default DBSCAN radius, 10^(-3.5).
pub const DEFAULT_EPS: f64 = 3.1622776601683794e-4;
pub const DEFAULT_MIN_SAMPLES: usize = 2;

/// Cluster labels per job: >= 0 for clusters, -1 for noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_samples: usize,
}

impl Clustering {
    pub const NOISE: i64 = -1;

    pub fn n_clusters(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l + 1)
            .max()
            .unwrap_or(0) as usize
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Self::NOISE).count()
    }

    /// Sizes of clusters 0..C-1.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// Standardize columns (zero-variance columns become zero) and scale each row
/// to unit Euclidean norm. Rows that are all zero after standardization stay
/// zero; their indices are returned alongside.
pub fn preprocess_embeddings(matrix: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    if matrix.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n = matrix.len();
    let d = matrix[0].len();
    let mut means = vec![0.0; d];
    for row in matrix {
        for (m, &x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut variances = vec![0.0; d];
    for row in matrix {
        for ((v, &m), &x) in variances.iter_mut().zip(&means).zip(row) {
            *v += (x - m) * (x - m);
        }
    }
    for v in &mut variances {
        *v /= n as f64;
    }
    let stds: Vec<f64> = variances.iter().map(|&v| v.sqrt()).collect();
    let mut out = Vec::with_capacity(n);
    let mut zero_rows = Vec::new();
    for (i, row) in matrix.iter().enumerate() {
        let mut z: Vec<f64> = row
            .iter()
            .zip(&means)
            .zip(&stds)
            .map(|((&x, &m), &s)| if s > 0.0 { (x - m) / s } else { 0.0 })
            .collect();
        let norm = z.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut z {
                *x /= norm;
            }
        } else {
            zero_rows.push(i);
        }
        out.push(z);
    }
    (out, zero_rows)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Standard DBSCAN with a fixed scan order. A core point has at least
/// `min_samples` points (itself included) within `eps`; clusters are the
/// eps-connected components of core points plus their border points, and a
/// border point reachable from several clusters joins the one that claims it
/// first in scan order. Labels come out contiguous in order of cluster
/// creation.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Clustering {
    let n = points.len();
    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean_distance(&points[i], &points[j]).unwrap() <= eps)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighborhoods.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut labels = vec![Clustering::NOISE; n];
    let mut next_label = 0i64;
    for start in 0..n {
        if labels[start] != Clustering::NOISE || !is_core[start] {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[start] = label;
        let mut frontier = vec![start];
        let mut head = 0;
        while head < frontier.len() {
            let v = frontier[head];
            head += 1;
            for &w in &neighborhoods[v] {
                if labels[w] == Clustering::NOISE {
                    labels[w] = label;
                    if is_core[w] {
                        frontier.push(w);
                    }
                }
            }
        }
    }
    Clustering {
        labels,
        eps,
        min_samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Independent DBSCAN: connected components of core points via a full
    /// distance matrix, then border points attach to the component whose
    /// first-discovered core point comes earliest in scan order. Mirrors the
    /// documented border tie-break without sharing code with the
    /// implementation.
    fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
        let n = points.len();
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = euclidean_distance(&points[i], &points[j]).unwrap();
            }
        }
        let is_core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| dist[i][j] <= eps).count() >= min_samples)
            .collect();
        let mut labels = vec![-1i64; n];
        let mut next = 0i64;
        for i in 0..n {
            if !is_core[i] || labels[i] != -1 {
                continue;
            }
            let label = next;
            next += 1;
            let mut stack = vec![i];
            labels[i] = label;
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if is_core[w] && labels[w] == -1 && dist[v][w] <= eps {
                        labels[w] = label;
                        stack.push(w);
                    }
                }
            }
        }
        // Border points: scan-order expansion means a border point belongs to
        // the cluster of the earliest core point (in scan order) that reaches
        // it among clusters created up to that moment; with full expansion per
        // cluster, that is the cluster with the smallest label among core
        // points within eps.
        for i in 0..n {
            if is_core[i] || labels[i] != -1 {
                continue;
            }
            let claim = (0..n)
                .filter(|&j| is_core[j] && dist[i][j] <= eps)
                .map(|j| labels[j])
                .min();
            if let Some(label) = claim {
                labels[i] = label;
            }
        }
        labels
    }

    fn assert_same_partition(a: &[i64], b: &[i64]) {
        assert_eq!(a.len(), b.len());
        let mut fwd = std::collections::HashMap::new();
        let mut bwd = std::collections::HashMap::new();
        for (&x, &y) in a.iter().zip(b) {
            if x == -1 || y == -1 {
                assert_eq!(x, y, "noise must match exactly");
                continue;
            }
            assert_eq!(*fwd.entry(x).or_insert(y), y, "labels {a:?} vs {b:?}");
            assert_eq!(*bwd.entry(y).or_insert(x), x, "labels {a:?} vs {b:?}");
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let points = vec![vec![1.0, 2.0]; 5];
        let c = dbscan(&points, 1e-9, 2);
        assert_eq!(c.labels, vec![0, 0, 0, 0, 0]);
        assert_eq!(c.n_clusters(), 1);
        assert_eq!(c.noise_count(), 0);
    }

    #[test]
    fn two_distant_points_are_noise() {
        let eps = 0.5;
        let points = vec![vec![0.0], vec![2.0 * eps]];
        let c = dbscan(&points, eps, 2);
        assert_eq!(c.labels, vec![-1, -1]);
    }

    #[test]
    fn border_point_joins_first_claiming_cluster() {
        // Two tight quadruples around 0 and 1; the point at 0.515 has only
        // three eps-neighbors (itself plus one core from each side), so it is
        // a border point shared by both clusters and scan order gives it to
        // the earlier one.
        let mut points: Vec<Vec<f64>> = [0.00, 0.01, 0.02, 0.03, 1.00, 1.01, 1.02, 1.03]
            .iter()
            .map(|&x| vec![x])
            .collect();
        points.push(vec![0.515]);
        let c = dbscan(&points, 0.49, 4);
        assert_eq!(c.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);
    }

    #[test]
    fn min_samples_two_forbids_singleton_clusters() {
        let points = vec![vec![0.0], vec![10.0], vec![10.1], vec![20.0]];
        let c = dbscan(&points, 0.5, 2);
        assert_eq!(c.labels, vec![-1, 0, 0, -1]);
        for size in c.cluster_sizes() {
            assert!(size >= 2);
        }
    }

    #[test]
    fn random_point_sets_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for trial in 0..50 {
            let n = rng.gen_range(2..=200);
            let d = rng.gen_range(1..=8);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let eps = rng.gen_range(0.05..1.0);
            let min_samples = rng.gen_range(2..=5);
            let got = dbscan(&points, eps, min_samples);
            let want = dbscan_reference(&points, eps, min_samples);
            assert_same_partition(&got.labels, &want);
            assert_eq!(got.labels, want, "trial {trial}: scan-order labels must agree exactly");
        }
    }

    #[test]
    fn growing_eps_never_increases_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let mut last_noise = usize::MAX;
        for eps in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let noise = dbscan(&points, eps, 3).noise_count();
            assert!(noise <= last_noise);
            last_noise = noise;
        }
    }

    #[test]
    fn preprocessing_yields_unit_rows() {
        let matrix = vec![
            vec![1.0, 10.0, 3.0],
            vec![2.0, 20.0, 3.0],
            vec![3.0, 35.0, 3.0],
        ];
        let (out, zero_rows) = preprocess_embeddings(&matrix);
        assert!(zero_rows.is_empty());
        for row in &out {
            let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // The constant column carries nothing after standardization.
        for row in &out {
            assert_eq!(row[2], 0.0);
        }
    }

    #[test]
    fn identical_rows_stay_identical() {
        let matrix = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![5.0, 9.0]];
        let (out, _) = preprocess_embeddings(&matrix);
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn hand_computed_three_row_preprocess() {
        // Columns: [0,1,2] and [4,4,4]. Means 1 and 4; stds sqrt(2/3) and 0.
        let matrix = vec![vec![0.0, 4.0], vec![1.0, 4.0], vec![2.0, 4.0]];
        let (out, zero_rows) = preprocess_embeddings(&matrix);
        // Row 1 standardizes to (0, 0): flagged zero, left unnormalized.
        assert_eq!(zero_rows, vec![1]);
        assert_eq!(out[1], vec![0.0, 0.0]);
        // Rows 0 and 2 standardize to (∓sqrt(3/2), 0), normalizing to ∓1.
        assert!((out[0][0] + 1.0).abs() < 1e-12);
        assert!((out[2][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let d = rng.gen_range(1..=6);
            let p: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let ab = euclidean_distance(&p[0], &p[1]).unwrap();
            let bc = euclidean_distance(&p[1], &p[2]).unwrap();
            let ac = euclidean_distance(&p[0], &p[2]).unwrap();
            assert!(ac <= ab + bc + 1e-12);
            assert!((ab - euclidean_distance(&p[1], &p[0]).unwrap()).abs() == 0.0);
        }
    }
}

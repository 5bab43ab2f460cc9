//! Runtime-prediction evaluation over clusterings.
//!
//! Each cluster predicts the runtime of its most recent member as the mean
//! runtime of the remaining members; reports aggregate MAE, MSE, and error
//! variances, plus histogram data and a shared-subset comparison between two
//! methods.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions: every cluster has fewer than two members")]
    NoPredictions,
    #[error("label vector length {labels} does not match job count {jobs}")]
    LengthMismatch { labels: usize, jobs: usize },
}

/// One per-cluster prediction: the most recent member's runtime estimated
/// from the rest of the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrediction {
    pub cluster_id: i64,
    pub target_job: String,
    pub predicted_runtime_s: f64,
    pub actual_runtime_s: f64,
}

impl ClusterPrediction {
    pub fn signed_error(&self) -> f64 {
        self.predicted_runtime_s - self.actual_runtime_s
    }
}

/// Per-job inputs to the evaluator, parallel to the clustering's labels.
#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub job_name: String,
    pub runtime_s: f64,
    pub start_time: i64,
}

/// One prediction per cluster of size >= 2: the target is the member with the
/// latest start time (ties go to the lexicographically greatest job name) and
/// the prediction is the mean runtime of the other members. Returns the
/// predictions ordered by cluster id plus the count of skipped undersized
/// clusters.
pub fn cluster_runtime_prediction(
    labels: &[i64],
    jobs: &[JobOutcome],
) -> Result<(Vec<ClusterPrediction>, usize), EvalError> {
    if labels.len() != jobs.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            jobs: jobs.len(),
        });
    }
    let mut clusters: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, &label) in labels.iter().enumerate() {
        if label >= 0 {
            clusters.entry(label).or_default().push(i);
        }
    }
    let mut ids: Vec<i64> = clusters.keys().copied().collect();
    ids.sort_unstable();
    let mut predictions = Vec::new();
    let mut skipped = 0;
    for id in ids {
        let members = &clusters[&id];
        if members.len() < 2 {
            skipped += 1;
            continue;
        }
        let &target = members
            .iter()
            .max_by(|&&a, &&b| {
                jobs[a]
                    .start_time
                    .cmp(&jobs[b].start_time)
                    .then_with(|| jobs[a].job_name.cmp(&jobs[b].job_name))
            })
            .unwrap();
        let rest: Vec<usize> = members.iter().copied().filter(|&m| m != target).collect();
        let predicted = rest.iter().map(|&m| jobs[m].runtime_s).sum::<f64>() / rest.len() as f64;
        predictions.push(ClusterPrediction {
            cluster_id: id,
            target_job: jobs[target].job_name.clone(),
            predicted_runtime_s: predicted,
            actual_runtime_s: jobs[target].runtime_s,
        });
    }
    Ok((predictions, skipped))
}

/// Error statistics over one set of signed errors. Both the variance of
/// signed errors and of absolute errors are reported (population form), each
/// labeled by its field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub signed_error_variance: f64,
    pub abs_error_variance: f64,
}

pub fn error_stats(errors: &[f64]) -> Option<ErrorStats> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let signed_var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let abs_var = errors.iter().map(|e| (e.abs() - mae) * (e.abs() - mae)).sum::<f64>() / n;
    Some(ErrorStats {
        n: errors.len(),
        mae,
        mse,
        signed_error_variance: signed_var,
        abs_error_variance: abs_var,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_clusters: usize,
    pub avg_cluster_size: f64,
    pub outlier_proportion: f64,
    pub stats: ErrorStats,
    pub skipped_clusters: usize,
    pub predictions: Vec<ClusterPrediction>,
}

/// Aggregate a prediction list into the report. `labels` is the full
/// clustering over the evaluated jobs; the outlier proportion is noise over
/// all evaluated jobs.
pub fn compute_metrics(
    predictions: Vec<ClusterPrediction>,
    skipped_clusters: usize,
    labels: &[i64],
) -> Result<EvalReport, EvalError> {
    let errors: Vec<f64> = predictions.iter().map(ClusterPrediction::signed_error).collect();
    let stats = error_stats(&errors).ok_or(EvalError::NoPredictions)?;
    let mut sizes: HashMap<i64, usize> = HashMap::new();
    let mut noise = 0usize;
    for &label in labels {
        if label >= 0 {
            *sizes.entry(label).or_insert(0) += 1;
        } else {
            noise += 1;
        }
    }
    let n_clusters = sizes.len();
    let clustered: usize = sizes.values().sum();
    Ok(EvalReport {
        n_clusters,
        avg_cluster_size: if n_clusters > 0 {
            clustered as f64 / n_clusters as f64
        } else {
            0.0
        },
        outlier_proportion: if labels.is_empty() {
            0.0
        } else {
            noise as f64 / labels.len() as f64
        },
        stats,
        skipped_clusters,
        predictions,
    })
}

/// Metrics for two methods restricted to the target jobs both predicted.
/// `intersection_size == 0` is the explicit empty marker (no stats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedSubsetReport {
    pub intersection_size: usize,
    pub a: Option<ErrorStats>,
    pub b: Option<ErrorStats>,
}

pub fn shared_subset_compare(
    preds_a: &[ClusterPrediction],
    preds_b: &[ClusterPrediction],
) -> SharedSubsetReport {
    let by_name = |preds: &[ClusterPrediction]| -> HashMap<String, f64> {
        preds
            .iter()
            .map(|p| (p.target_job.clone(), p.signed_error()))
            .collect()
    };
    let a = by_name(preds_a);
    let b = by_name(preds_b);
    let mut shared: Vec<&String> = a.keys().filter(|name| b.contains_key(*name)).collect();
    shared.sort_unstable();
    let errors_a: Vec<f64> = shared.iter().map(|name| a[*name]).collect();
    let errors_b: Vec<f64> = shared.iter().map(|name| b[*name]).collect();
    SharedSubsetReport {
        intersection_size: shared.len(),
        a: error_stats(&errors_a),
        b: error_stats(&errors_b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
    /// Fraction of errors with |error| <= 1000 s.
    pub within_1000_proportion: f64,
}

impl ErrorHistogram {
    pub fn bin_range(&self, i: usize) -> (f64, f64) {
        let lo = self.lo + i as f64 * self.bin_width;
        (lo, (lo + self.bin_width).min(self.hi))
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }
}

/// Fixed-width histogram over [lo, hi] with under/overflow bins; a value
/// exactly at `hi` lands in the last bin.
pub fn error_histogram(errors: &[f64], bin_width: f64, lo: f64, hi: f64) -> ErrorHistogram {
    assert!(bin_width > 0.0, "bin_width must be positive");
    assert!(hi > lo, "histogram range must be nonempty");
    let n_bins = ((hi - lo) / bin_width).ceil() as usize;
    let mut counts = vec![0usize; n_bins.max(1)];
    let mut underflow = 0;
    let mut overflow = 0;
    let mut within = 0usize;
    for &e in errors {
        if e.abs() <= 1000.0 {
            within += 1;
        }
        if e < lo {
            underflow += 1;
        } else if e > hi {
            overflow += 1;
        } else {
            let idx = (((e - lo) / bin_width).floor() as usize).min(counts.len() - 1);
            counts[idx] += 1;
        }
    }
    ErrorHistogram {
        lo,
        hi,
        bin_width,
        counts,
        underflow,
        overflow,
        within_1000_proportion: if errors.is_empty() {
            0.0
        } else {
            within as f64 / errors.len() as f64
        },
    }
}

/// Adjusted Rand index between two labelings; -1 entries are treated as
/// singletons (each noise point its own cluster) on both sides.
pub fn adjusted_rand_index(labels: &[i64], ground_truth: &[i64]) -> f64 {
    assert_eq!(labels.len(), ground_truth.len(), "label vectors must align");
    let promote = |v: &[i64]| -> Vec<i64> {
        let max = v.iter().copied().max().unwrap_or(-1);
        let mut next = max + 1;
        v.iter()
            .map(|&l| {
                if l < 0 {
                    next += 1;
                    next - 1
                } else {
                    l
                }
            })
            .collect()
    };
    let a = promote(labels);
    let b = promote(ground_truth);
    let n = a.len();
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_insert(0) += 1;
        *rows.entry(a[i]).or_insert(0) += 1;
        *cols.entry(b[i]).or_insert(0) += 1;
    }
    let choose2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 };
    }
    (index - expected) / denom
}

//! Three-technique feature-selection vote choosing the encoder's target
//! variables from the 20 static graph features.

pub mod extra_trees;
pub mod pca;
pub mod rfe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{GraphFeatureVector, FEATURE_NAMES};
pub use extra_trees::{extra_trees_importance, ExtraTreesParams};
pub use pca::{components_covering, pca_scores};
pub use rfe::rfe_linear_rank;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("need at least 2 samples, found {found}")]
    TooFewSamples { found: usize },
    #[error("normal equations singular beyond ridge rescue; collinear columns {columns:?}")]
    Collinear { columns: Vec<usize> },
}

/// Fraction of variance the PCA components must cover.
const PCA_VARIANCE_TARGET: f64 = 0.90;

/// Standardized matrix plus the statistics that produced it. Constant
/// columns become all-zero and are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant_columns: Vec<usize>,
}

/// Column-wise z-scoring with population variance.
pub fn standardize(matrix: &[Vec<f64>]) -> Standardized {
    assert!(matrix.len() >= 2, "standardize needs at least 2 rows");
    let n = matrix.len() as f64;
    let d = matrix[0].len();
    let mut means = vec![0.0; d];
    for row in matrix {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; d];
    for row in matrix {
        for ((s, &m), &v) in stds.iter_mut().zip(&means).zip(row) {
            *s += (v - m) * (v - m);
        }
    }
    let mut constant_columns = Vec::new();
    for (c, s) in stds.iter_mut().enumerate() {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            constant_columns.push(c);
        }
    }
    let matrix = matrix
        .iter()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&stds)
                .map(|((&v, &m), &s)| if s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect();
    Standardized {
        matrix,
        means,
        stds,
        constant_columns,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Full feature rankings per technique, best first.
    pub pca_ranking: Vec<String>,
    pub extra_trees_ranking: Vec<String>,
    pub rfe_ranking: Vec<String>,
    /// Union of the top-k of each technique, in feature-table order.
    pub chosen_targets: Vec<String>,
}

/// Run the vote: PCA scores the standardized features unsupervised,
/// extra-trees and RFE score them against the runtime target, and the union
/// of each technique's top k becomes the encoder's target set. The runtime
/// itself is never a candidate.
pub fn select_targets(
    rows: &[GraphFeatureVector],
    k: usize,
    tree_params: &ExtraTreesParams,
    seed: u64,
) -> Result<SelectionResult, SelectError> {
    if rows.len() < 2 {
        return Err(SelectError::TooFewSamples { found: rows.len() });
    }
    let matrix: Vec<Vec<f64>> = rows.iter().map(|r| r.values.to_vec()).collect();
    let runtime: Vec<f64> = rows.iter().map(|r| r.runtime_s).collect();
    let standardized = standardize(&matrix);

    let n_components = components_covering(&standardized.matrix, PCA_VARIANCE_TARGET);
    let pca = pca_scores(&standardized.matrix, n_components);
    let trees = extra_trees_importance(&standardized.matrix, &runtime, tree_params, seed)?;
    let rfe = rfe_linear_rank(&standardized.matrix, &runtime)?;

    let by_score_desc = |scores: &[f64]| -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
        order
    };
    let pca_order = by_score_desc(&pca);
    let trees_order = by_score_desc(&trees);
    let mut rfe_order: Vec<usize> = (0..rfe.len()).collect();
    rfe_order.sort_by_key(|&i| (rfe[i], i));

    let mut chosen = [false; FEATURE_NAMES.len()];
    for order in [&pca_order, &trees_order, &rfe_order] {
        for &f in order.iter().take(k) {
            chosen[f] = true;
        }
    }
    let names = |order: &[usize]| -> Vec<String> {
        order.iter().map(|&f| FEATURE_NAMES[f].to_string()).collect()
    };
    Ok(SelectionResult {
        pca_ranking: names(&pca_order),
        extra_trees_ranking: names(&trees_order),
        rfe_ranking: names(&rfe_order),
        chosen_targets: FEATURE_NAMES
            .iter()
            .enumerate()
            .filter(|(f, _)| chosen[*f])
            .map(|(_, name)| name.to_string())
            .collect(),
    })
}

//! Feature importance from totally randomized regression trees.
//!
//! Each tree node picks one random non-constant feature and a uniform random
//! threshold inside that feature's node-local range; importance is the
//! sample-weighted variance reduction credited to the split feature, averaged
//! over the ensemble.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SelectError;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        ExtraTreesParams {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 5,
        }
    }
}

const MAX_THRESHOLD_REDRAWS: usize = 10;

pub fn extra_trees_importance(
    x: &[Vec<f64>],
    y: &[f64],
    params: &ExtraTreesParams,
    seed: u64,
) -> Result<Vec<f64>, SelectError> {
    if x.len() < 2 {
        return Err(SelectError::TooFewSamples { found: x.len() });
    }
    assert_eq!(x.len(), y.len(), "feature rows and targets must align");
    let d = x[0].len();
    let mut total = vec![0.0; d];
    for tree in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tree as u64));
        let mut importance = vec![0.0; d];
        let indices: Vec<usize> = (0..x.len()).collect();
        grow(x, y, indices, 0, params, &mut rng, &mut importance);
        for (t, i) in total.iter_mut().zip(&importance) {
            *t += i / x.len() as f64;
        }
    }
    for t in &mut total {
        *t /= params.n_trees as f64;
    }
    Ok(total)
}

fn variance(y: &[f64], indices: &[usize]) -> f64 {
    let n = indices.len() as f64;
    let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / n;
    indices.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum::<f64>() / n
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    indices: Vec<usize>,
    depth: usize,
    params: &ExtraTreesParams,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) {
    if depth >= params.max_depth || indices.len() < 2 * params.min_leaf {
        return;
    }
    let node_var = variance(y, &indices);
    if node_var <= 0.0 {
        return;
    }
    let d = x[0].len();
    let spans: Vec<(usize, f64, f64)> = (0..d)
        .filter_map(|f| {
            let lo = indices.iter().map(|&i| x[i][f]).fold(f64::INFINITY, f64::min);
            let hi = indices
                .iter()
                .map(|&i| x[i][f])
                .fold(f64::NEG_INFINITY, f64::max);
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if spans.is_empty() {
        return;
    }
    for _ in 0..MAX_THRESHOLD_REDRAWS {
        let &(feature, lo, hi) = &spans[rng.gen_range(0..spans.len())];
        let threshold = rng.gen_range(lo..hi);
        let (left, right): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| x[i][feature] <= threshold);
        if left.len() < params.min_leaf || right.len() < params.min_leaf {
            continue;
        }
        importance[feature] += indices.len() as f64 * node_var
            - left.len() as f64 * variance(y, &left)
            - right.len() as f64 * variance(y, &right);
        grow(x, y, left, depth + 1, params, rng, importance);
        grow(x, y, right, depth + 1, params, rng, importance);
        return;
    }
}

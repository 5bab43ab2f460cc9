//! Recursive feature elimination with ridge-stabilized least squares.

use super::SelectError;

const RIDGE: f64 = 1e-8;

/// Solve (XᵀX + ridge·I) β = Xᵀy for the given active columns.
pub(crate) fn ridge_coefficients(
    x: &[Vec<f64>],
    y: &[f64],
    active: &[usize],
    ridge: f64,
) -> Result<Vec<f64>, SelectError> {
    let m = active.len();
    let mut gram = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for (row, &target) in x.iter().zip(y) {
        for (i, &fi) in active.iter().enumerate() {
            rhs[i] += row[fi] * target;
            for (j, &fj) in active.iter().enumerate().skip(i) {
                gram[i][j] += row[fi] * row[fj];
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            gram[j][i] = gram[i][j];
        }
        gram[i][i] += ridge;
    }
    solve(gram, rhs).ok_or_else(|| SelectError::Collinear {
        columns: active.to_vec(),
    })
}

/// Gaussian elimination with partial pivoting; None when a pivot degenerates.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-15 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut solution = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * solution[k];
        }
        solution[row] = acc / a[row][row];
    }
    Some(solution)
}

/// Eliminate the smallest-|coefficient| feature one at a time; returns each
/// feature's rank, where rank 1 survived longest and rank d fell first. Ties
/// on |coefficient| eliminate the higher feature index.
pub fn rfe_linear_rank(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<usize>, SelectError> {
    if x.len() < 2 {
        return Err(SelectError::TooFewSamples { found: x.len() });
    }
    let d = x[0].len();
    let mut active: Vec<usize> = (0..d).collect();
    let mut rank = vec![1usize; d];
    while active.len() > 1 {
        let beta = ridge_coefficients(x, y, &active, RIDGE)?;
        let weakest = (0..active.len())
            .min_by(|&i, &j| {
                beta[i]
                    .abs()
                    .partial_cmp(&beta[j].abs())
                    .unwrap()
                    .then(active[j].cmp(&active[i]))
            })
            .unwrap();
        rank[active[weakest]] = active.len();
        active.remove(weakest);
    }
    Ok(rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_coefficient_feature_falls_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> = x.iter().map(|row| 3.0 * row[0]).collect();
        let rank = rfe_linear_rank(&x, &y).unwrap();
        assert_eq!(rank, vec![1, 2]);
    }

    #[test]
    fn single_feature_ranks_first_trivially() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![2.0, 4.0, 6.0];
        assert_eq!(rfe_linear_rank(&x, &y).unwrap(), vec![1]);
    }

    #[test]
    fn noise_feature_is_eliminated_before_signal_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|row| row[0] + row[1]).collect();
        let rank = rfe_linear_rank(&x, &y).unwrap();
        assert_eq!(rank[2], 3);
        assert!(rank[0] <= 2 && rank[1] <= 2);
    }

    /// Cramer's rule on the 3x3 normal equations, fully independent of the
    /// elimination-based solver.
    fn cramer_3x3(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Vec<f64> {
        let mut g = [[0.0; 3]; 3];
        let mut r = [0.0; 3];
        for (row, &t) in x.iter().zip(y) {
            for i in 0..3 {
                r[i] += row[i] * t;
                for j in 0..3 {
                    g[i][j] += row[i] * row[j];
                }
            }
        }
        for (i, row) in g.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let det = |m: [[f64; 3]; 3]| -> f64 {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(g);
        (0..3)
            .map(|col| {
                let mut replaced = g;
                for i in 0..3 {
                    replaced[i][col] = r[i];
                }
                det(replaced) / d
            })
            .collect()
    }

    #[test]
    fn coefficients_match_cramer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| 2.0 * row[0] - 0.5 * row[1] + 0.1 * row[2])
            .collect();
        let got = ridge_coefficients(&x, &y, &[0, 1, 2], RIDGE).unwrap();
        let want = cramer_3x3(&x, &y, RIDGE);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn ranking_is_invariant_under_column_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| 3.0 * row[0] + 2.0 * row[1] + 1.0 * row[2] + 0.2 * row[3])
            .collect();
        let rank = rfe_linear_rank(&x, &y).unwrap();
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<Vec<f64>> = x
            .iter()
            .map(|row| perm.iter().map(|&p| row[p]).collect())
            .collect();
        let permuted_rank = rfe_linear_rank(&permuted, &y).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(permuted_rank[i], rank[p]);
        }
    }
}

//! PCA-based feature scoring on standardized matrices.

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns (`vectors[row][component]`).
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|row| order.iter().map(|&c| v[row][c]).collect())
        .collect();
    (values, vectors)
}

/// Covariance matrix of a column-centered matrix (population normalization).
pub fn covariance(matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = matrix.len();
    let d = matrix.first().map_or(0, Vec::len);
    let mut cov = vec![vec![0.0; d]; d];
    for row in matrix {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n as f64;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Smallest component count whose explained variance reaches `fraction` of
/// the total; at least 1.
pub fn components_covering(matrix: &[Vec<f64>], fraction: f64) -> usize {
    let (values, _) = symmetric_eigen(&covariance(matrix));
    let total: f64 = values.iter().map(|&v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut cumulative = 0.0;
    for (i, &v) in values.iter().enumerate() {
        cumulative += v.max(0.0);
        if cumulative / total >= fraction {
            return i + 1;
        }
    }
    values.len()
}

/// Per-feature PCA score: sum over the top components of explained-variance
/// ratio times the absolute loading. Sign flips of eigenvectors cannot change
/// the result.
pub fn pca_scores(matrix: &[Vec<f64>], n_components: usize) -> Vec<f64> {
    let d = matrix.first().map_or(0, Vec::len);
    let (values, vectors) = symmetric_eigen(&covariance(matrix));
    let total: f64 = values.iter().map(|&v| v.max(0.0)).sum();
    let m = n_components.min(d);
    let mut scores = vec![0.0; d];
    if total <= 0.0 {
        return scores;
    }
    for c in 0..m {
        let ratio = values[c].max(0.0) / total;
        for f in 0..d {
            scores[f] += ratio * vectors[f][c].abs();
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum();
            }
        }
        a
    }

    /// Power iteration with deflation: top eigenvalues of a PSD matrix,
    /// independent of the Jacobi path.
    fn power_iteration_eigenvalues(matrix: &[Vec<f64>], count: usize) -> Vec<f64> {
        let n = matrix.len();
        let mut a = matrix.to_vec();
        let mut values = Vec::new();
        for round in 0..count {
            let mut v: Vec<f64> = (0..n)
                .map(|i| if (i + round) % 3 == 0 { 1.0 } else { 0.5 })
                .collect();
            let mut lambda = 0.0;
            for _ in 0..20_000 {
                let mut next = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        next[i] += a[i][j] * v[j];
                    }
                }
                let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-30 {
                    lambda = 0.0;
                    break;
                }
                for x in &mut next {
                    *x /= norm;
                }
                lambda = norm;
                v = next;
            }
            values.push(lambda);
            for i in 0..n {
                for j in 0..n {
                    a[i][j] -= lambda * v[i] * v[j];
                }
            }
        }
        values
    }

    #[test]
    fn eigenvalues_match_power_iteration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let a = random_psd(&mut rng, 6);
            let (values, _) = symmetric_eigen(&a);
            let oracle = power_iteration_eigenvalues(&a, 6);
            for (got, want) in values.iter().zip(&oracle) {
                assert!(
                    (got - want).abs() < 1e-8 * (1.0 + want.abs()),
                    "jacobi {got} vs power {want}"
                );
            }
        }
    }

    #[test]
    fn eigenpairs_satisfy_the_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_psd(&mut rng, 8);
        let (values, vectors) = symmetric_eigen(&a);
        for c in 0..8 {
            for r in 0..8 {
                let av: f64 = (0..8).map(|k| a[r][k] * vectors[k][c]).sum();
                assert!((av - values[c] * vectors[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_zero_feature_scores_below_informative_one() {
        // Standardized two-column matrix: first column carries all variance.
        let matrix = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let scores = pca_scores(&matrix, 2);
        assert!(scores[0] > scores[1]);
        assert!(scores[1].abs() < 1e-12);
    }

    #[test]
    fn perfectly_correlated_features_score_equally() {
        let matrix: Vec<Vec<f64>> = [-1.2, -0.3, 0.3, 1.2]
            .iter()
            .map(|&x| vec![x, x])
            .collect();
        let scores = pca_scores(&matrix, 2);
        assert!((scores[0] - scores[1]).abs() < 1e-9);
    }

    #[test]
    fn component_count_covers_requested_variance() {
        // One dominant direction: a single component reaches 90%. Column 2
        // is an exact multiple of column 1, so the covariance has rank 2 and
        // full coverage needs only 2 components.
        let matrix: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = (i as f64 - 19.5) / 10.0;
                vec![t, t * 0.98, 0.01 * if i % 2 == 0 { 1.0 } else { -1.0 }]
            })
            .collect();
        assert_eq!(components_covering(&matrix, 0.90), 1);
        assert_eq!(components_covering(&matrix, 0.9999999), 2);
    }

    #[test]
    fn scores_permute_with_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let matrix: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let scores = pca_scores(&matrix, 3);
        let perm = [4usize, 0, 3, 1, 2];
        let permuted: Vec<Vec<f64>> = matrix
            .iter()
            .map(|row| perm.iter().map(|&p| row[p]).collect())
            .collect();
        let permuted_scores = pca_scores(&permuted, 3);
        for (i, &p) in perm.iter().enumerate() {
            assert!((permuted_scores[i] - scores[p]).abs() < 1e-9);
        }
    }
}

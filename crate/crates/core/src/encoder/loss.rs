//! Additive triplet loss over quantile-binned target variables, with
//! multi-similarity-style mining of challenging pairs.

/// Equal-frequency bin labels in [0, n_bins). Ranks break ties by position,
/// so equal values can straddle a bin boundary; an all-constant vector maps
/// to label 0 everywhere.
pub fn quantile_labels(values: &[f64], n_bins: usize) -> Vec<usize> {
    assert!(n_bins >= 2, "need at least 2 bins");
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo == hi {
        return vec![0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap().then(i.cmp(&j)));
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank * n_bins / n;
    }
    labels
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Multi-similarity mining: per anchor, a positive survives if it is farther
/// than the nearest negative minus epsilon, a negative survives if it is
/// closer than the farthest positive plus epsilon; surviving pairs cross
/// into (anchor, positive, negative) triplets.
pub fn mine_triplets(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    epsilon: f64,
) -> Vec<(usize, usize, usize)> {
    assert_eq!(embeddings.len(), labels.len());
    let n = embeddings.len();
    let mut triplets = Vec::new();
    for a in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&p| p != a && labels[p] == labels[a])
            .collect();
        let negatives: Vec<usize> = (0..n).filter(|&x| labels[x] != labels[a]).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let min_neg = negatives
            .iter()
            .map(|&x| distance(&embeddings[a], &embeddings[x]))
            .fold(f64::INFINITY, f64::min);
        let max_pos = positives
            .iter()
            .map(|&p| distance(&embeddings[a], &embeddings[p]))
            .fold(f64::NEG_INFINITY, f64::max);
        let kept_pos: Vec<usize> = positives
            .into_iter()
            .filter(|&p| distance(&embeddings[a], &embeddings[p]) > min_neg - epsilon)
            .collect();
        let kept_neg: Vec<usize> = negatives
            .into_iter()
            .filter(|&x| distance(&embeddings[a], &embeddings[x]) < max_pos + epsilon)
            .collect();
        for &p in &kept_pos {
            for &x in &kept_neg {
                triplets.push((a, p, x));
            }
        }
    }
    triplets
}

/// Mean hinge loss over triplets: max(0, d(a,p) - d(a,n) + margin).
pub fn triplet_loss(
    triplets: &[(usize, usize, usize)],
    embeddings: &[Vec<f64>],
    margin: f64,
) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    triplets
        .iter()
        .map(|&(a, p, n)| {
            (distance(&embeddings[a], &embeddings[p]) - distance(&embeddings[a], &embeddings[n])
                + margin)
                .max(0.0)
        })
        .sum::<f64>()
        / triplets.len() as f64
}

/// Loss plus its gradient with respect to each embedding. Coincident points
/// (distance below 1e-12) contribute a zero subgradient for that leg.
pub fn triplet_loss_grad(
    triplets: &[(usize, usize, usize)],
    embeddings: &[Vec<f64>],
    margin: f64,
) -> (f64, Vec<Vec<f64>>) {
    let dim = embeddings.first().map_or(0, |e| e.len());
    let mut grads = vec![vec![0.0; dim]; embeddings.len()];
    if triplets.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for &(a, p, n) in triplets {
        let d_ap = distance(&embeddings[a], &embeddings[p]);
        let d_an = distance(&embeddings[a], &embeddings[n]);
        let term = d_ap - d_an + margin;
        if term <= 0.0 {
            continue;
        }
        total += term;
        if d_ap > 1e-12 {
            for i in 0..dim {
                let u = (embeddings[a][i] - embeddings[p][i]) / d_ap;
                grads[a][i] += scale * u;
                grads[p][i] -= scale * u;
            }
        }
        if d_an > 1e-12 {
            for i in 0..dim {
                let u = (embeddings[a][i] - embeddings[n][i]) / d_an;
                grads[a][i] -= scale * u;
                grads[n][i] += scale * u;
            }
        }
    }
    (total * scale, grads)
}

//! Mini-batch training loop: additive triplet loss over the selected
//! targets, L2 weight penalty, Adam updates, early stopping on a held-out
//! validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mine_triplets, quantile_labels, triplet_loss, triplet_loss_grad};
use super::{
    backward, forward_trace, DropoutMask, EncoderError, EncoderModel, FeatureScaler, ForwardTrace,
    GraphInput, ModelGrads,
};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub weight_decay: f64,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub margin: f64,
    pub miner_epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub n_label_bins: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            weight_decay: 1e-4,
            dropout_p: 0.5,
            learning_rate: 1e-3,
            margin: 0.1,
            miner_epsilon: 0.1,
            max_epochs: 200,
            patience: 10,
            n_label_bins: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size < 2 {
            return Err("batch_size must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err("dropout_p must lie in [0, 1)".into());
        }
        if self.margin <= 0.0 {
            return Err("margin must be positive".into());
        }
        if self.patience < 1 {
            return Err("patience must be at least 1".into());
        }
        if self.n_label_bins < 2 {
            return Err("n_label_bins must be at least 2".into());
        }
        Ok(())
    }
}

/// One split's graphs with the selected target variables;
/// `targets[t][i]` is target t's value for graph i.
#[derive(Debug, Clone)]
pub struct TrainSet<'a> {
    pub graphs: &'a [GraphInput],
    pub targets: &'a [Vec<f64>],
}

impl TrainSet<'_> {
    fn check(&self) {
        assert!(!self.graphs.is_empty(), "split must not be empty");
        for t in self.targets {
            assert_eq!(t.len(), self.graphs.len(), "target length mismatch");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Index into `val_loss` of the epoch whose model was returned.
    pub best_epoch: usize,
}

/// Adam over the flat parameter vector.
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Forward passes for one batch; masks present means train mode.
pub fn batch_outputs(
    model: &EncoderModel,
    graphs: &[&GraphInput],
    masks: Option<&[DropoutMask]>,
) -> Result<(Vec<ForwardTrace>, Vec<Vec<f64>>), EncoderError> {
    let traces: Vec<ForwardTrace> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| forward_trace(model, g, masks.map(|m| &m[i])))
        .collect::<Result<_, _>>()?;
    let outputs = traces.iter().map(|t| t.output.clone()).collect();
    Ok((traces, outputs))
}

/// Total batch loss for a fixed triplet selection: sum of per-target triplet
/// losses plus the L2 weight penalty.
pub fn loss_given_triplets(
    model: &EncoderModel,
    graphs: &[&GraphInput],
    masks: Option<&[DropoutMask]>,
    triplets_per_target: &[Vec<(usize, usize, usize)>],
    margin: f64,
    weight_decay: f64,
) -> Result<f64, EncoderError> {
    let (_, outputs) = batch_outputs(model, graphs, masks)?;
    let mut total = weight_decay * model.weight_squared_norm();
    for triplets in triplets_per_target {
        total += triplet_loss(triplets, &outputs, margin);
    }
    Ok(total)
}

/// Loss and flat parameter gradient for a fixed triplet selection, reusing
/// forward results already computed for this batch.
pub fn grads_given_triplets(
    model: &EncoderModel,
    graphs: &[&GraphInput],
    masks: Option<&[DropoutMask]>,
    traces: &[ForwardTrace],
    outputs: &[Vec<f64>],
    triplets_per_target: &[Vec<(usize, usize, usize)>],
    margin: f64,
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let mut total = weight_decay * model.weight_squared_norm();
    let mut d_out = vec![vec![0.0; model.hidden_dim]; graphs.len()];
    for triplets in triplets_per_target {
        let (l, per_point) = triplet_loss_grad(triplets, outputs, margin);
        total += l;
        for (acc, g) in d_out.iter_mut().zip(per_point) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    let mut grads = ModelGrads::zeros(model);
    for (i, graph) in graphs.iter().enumerate() {
        backward(
            model,
            graph,
            &traces[i],
            &d_out[i],
            masks.map(|m| &m[i]),
            &mut grads,
        );
    }
    let mut flat = grads.flatten();
    let params = model.flatten_params();
    for ((g, &p), is_weight) in flat.iter_mut().zip(&params).zip(model.weight_mask()) {
        if is_weight {
            *g += 2.0 * weight_decay * p;
        }
    }
    (total, flat)
}

fn split_labels(set: &TrainSet, n_bins: usize) -> Vec<Vec<usize>> {
    set.targets
        .iter()
        .map(|values| quantile_labels(values, n_bins))
        .collect()
}

fn batch_label_slices(labels: &[Vec<usize>], indices: &[usize]) -> Vec<Vec<usize>> {
    labels
        .iter()
        .map(|l| indices.iter().map(|&i| l[i]).collect())
        .collect()
}

/// Validation loss: eval-mode forward over fixed-order batches, mean of
/// per-batch additive triplet losses, no weight penalty.
fn validation_loss(
    model: &EncoderModel,
    set: &TrainSet,
    labels: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<f64, EncoderError> {
    let indices: Vec<usize> = (0..set.graphs.len()).collect();
    let mut total = 0.0;
    let mut n_batches = 0usize;
    for chunk in indices.chunks(cfg.batch_size) {
        let graphs: Vec<&GraphInput> = chunk.iter().map(|&i| &set.graphs[i]).collect();
        let (_, outputs) = batch_outputs(model, &graphs, None)?;
        let batch_labels = batch_label_slices(labels, chunk);
        for target_labels in &batch_labels {
            let triplets = mine_triplets(&outputs, target_labels, cfg.miner_epsilon);
            total += triplet_loss(&triplets, &outputs, cfg.margin);
        }
        n_batches += 1;
    }
    Ok(total / n_batches as f64)
}

/// Trains the encoder and returns the model from the best-validation epoch.
/// Fits the feature scaler on the training split first. Target labels come
/// from split-wide quantile binning of each target variable.
pub fn train(
    mut model: EncoderModel,
    train_set: &TrainSet,
    val_set: &TrainSet,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainHistory), EncoderError> {
    cfg.validate().expect("invalid training configuration");
    train_set.check();
    val_set.check();
    assert_eq!(train_set.targets.len(), val_set.targets.len());

    model.scaler = FeatureScaler::fit(train_set.graphs, model.in_dim);
    let train_labels = split_labels(train_set, cfg.n_label_bins);
    let val_labels = split_labels(val_set, cfg.n_label_bins);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut adam = Adam::new(cfg.learning_rate, model.flatten_params().len());

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best_model = model.clone();
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut indices: Vec<usize> = (0..train_set.graphs.len()).collect();
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let graphs: Vec<&GraphInput> = chunk.iter().map(|&i| &train_set.graphs[i]).collect();
            let masks: Vec<DropoutMask> = graphs
                .iter()
                .map(|_| DropoutMask::sample(model.hidden_dim, cfg.dropout_p, &mut dropout_rng))
                .collect();
            let (traces, outputs) = batch_outputs(&model, &graphs, Some(&masks))?;
            let batch_labels = batch_label_slices(&train_labels, chunk);
            let triplets: Vec<Vec<(usize, usize, usize)>> = batch_labels
                .iter()
                .map(|l| mine_triplets(&outputs, l, cfg.miner_epsilon))
                .collect();
            let (loss, flat_grads) = grads_given_triplets(
                &model,
                &graphs,
                Some(&masks),
                &traces,
                &outputs,
                &triplets,
                cfg.margin,
                cfg.weight_decay,
            );
            if !loss.is_finite() {
                return Err(EncoderError::NonFiniteLoss { epoch });
            }
            let mut params = model.flatten_params();
            adam.step(&mut params, &flat_grads);
            model.set_params(&params);
            if !model.params_finite() {
                return Err(EncoderError::NonFiniteParams { epoch });
            }
            epoch_loss += loss;
            n_batches += 1;
        }
        history.train_loss.push(epoch_loss / n_batches as f64);
        let val = validation_loss(&model, val_set, &val_labels, cfg)?;
        if !val.is_finite() {
            return Err(EncoderError::NonFiniteLoss { epoch });
        }
        history.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best_model = model.clone();
            history.best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_model;
    use rand::Rng;

    fn random_graph(rng: &mut ChaCha8Rng, dim: usize) -> GraphInput {
        let n = rng.gen_range(2..=4);
        let node_features = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.5) {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        GraphInput {
            node_features,
            neighbors,
        }
    }

    fn family_graph(rng: &mut ChaCha8Rng, level: f64) -> GraphInput {
        let n = rng.gen_range(3..=5);
        let node_features = (0..n)
            .map(|_| {
                vec![
                    level + rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]
            })
            .collect();
        let mut neighbors = vec![Vec::new(); n];
        for i in 1..n {
            let parent = rng.gen_range(0..i);
            neighbors[i].push(parent);
            neighbors[parent].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        GraphInput {
            node_features,
            neighbors,
        }
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        let mut adam = Adam::new(0.001, 1);
        let mut params = vec![1.0];
        adam.step(&mut params, &[0.5]);
        let want = 1.0 - 0.001 * 0.5 / (0.5f64 + 1e-8);
        assert!((params[0] - want).abs() < 1e-15);
    }

    #[test]
    fn adam_with_zero_learning_rate_is_a_noop() {
        let mut adam = Adam::new(0.0, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        for _ in 0..5 {
            adam.step(&mut params, &[0.3, -0.7, 10.0]);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn zero_learning_rate_training_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let graphs: Vec<GraphInput> = (0..8).map(|_| random_graph(&mut rng, 2)).collect();
        let targets = vec![(0..8).map(|i| i as f64).collect::<Vec<f64>>()];
        let set = TrainSet {
            graphs: &graphs,
            targets: &targets,
        };
        let cfg = TrainConfig {
            batch_size: 16,
            learning_rate: 0.0,
            dropout_p: 0.0,
            max_epochs: 4,
            patience: 10,
            n_label_bins: 2,
            ..TrainConfig::default()
        };
        let model = init_model(1, 2, 4, 2, 3);
        let (trained, history) = train(model.clone(), &set, &set, &cfg).unwrap();
        let mut expected = model.clone();
        expected.scaler = FeatureScaler::fit(&graphs, 2);
        assert_eq!(trained.layers, expected.layers);
        for &v in &history.val_loss {
            assert_eq!(v, history.val_loss[0]);
        }
        // The single batch sees the same pairs every epoch; only the
        // summation order can differ.
        for &v in &history.train_loss {
            assert!((v - history.train_loss[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let graphs: Vec<GraphInput> = (0..6).map(|_| random_graph(&mut rng, 1)).collect();
        let refs: Vec<&GraphInput> = graphs.iter().collect();
        let mut model = init_model(2, 1, 1, 1, 2);
        let masks: Vec<DropoutMask> = graphs
            .iter()
            .map(|_| DropoutMask::sample(1, 0.5, &mut rng))
            .collect();
        let (traces, outputs) = batch_outputs(&model, &refs, Some(&masks)).unwrap();
        let labels = vec![vec![0, 1, 0, 1, 0, 1], vec![1, 1, 0, 0, 1, 0]];
        let triplets: Vec<Vec<(usize, usize, usize)>> = labels
            .iter()
            .map(|l| mine_triplets(&outputs, l, 0.5))
            .collect();
        assert!(triplets.iter().any(|t| !t.is_empty()));
        let (_, analytic) = grads_given_triplets(
            &model,
            &refs,
            Some(&masks),
            &traces,
            &outputs,
            &triplets,
            0.3,
            1e-3,
        );
        let params = model.flatten_params();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut up = params.clone();
            up[i] += h;
            model.set_params(&up);
            let lu =
                loss_given_triplets(&model, &refs, Some(&masks), &triplets, 0.3, 1e-3).unwrap();
            let mut down = params.clone();
            down[i] -= h;
            model.set_params(&down);
            let ld =
                loss_given_triplets(&model, &refs, Some(&masks), &triplets, 0.3, 1e-3).unwrap();
            model.set_params(&params);
            let fd = (lu - ld) / (2.0 * h);
            let diff = (fd - analytic[i]).abs();
            assert!(
                diff <= 1e-7 || diff <= 1e-4 * fd.abs().max(analytic[i].abs()),
                "param {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn nan_parameter_aborts_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let graphs: Vec<GraphInput> = (0..4).map(|_| random_graph(&mut rng, 2)).collect();
        let targets = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let set = TrainSet {
            graphs: &graphs,
            targets: &targets,
        };
        let mut model = init_model(1, 2, 4, 1, 3);
        model.layers[0].w1[0][0][0] = f64::NAN;
        let cfg = TrainConfig {
            batch_size: 4,
            max_epochs: 2,
            n_label_bins: 2,
            ..TrainConfig::default()
        };
        assert_eq!(
            train(model, &set, &set, &cfg).unwrap_err(),
            EncoderError::NonFiniteLoss { epoch: 0 }
        );
    }

    #[test]
    fn families_separate_after_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut graphs = Vec::new();
        let mut family = Vec::new();
        for i in 0..40 {
            let level = if i % 2 == 0 { 1.0 } else { 9.0 };
            graphs.push(family_graph(&mut rng, level));
            family.push(i % 2);
        }
        let totals: Vec<f64> = graphs
            .iter()
            .map(|g| g.node_features.iter().map(|f| f[0]).sum())
            .collect();
        let train_graphs = graphs[..30].to_vec();
        let train_targets = vec![totals[..30].to_vec()];
        let val_graphs = graphs[30..].to_vec();
        let val_targets = vec![totals[30..].to_vec()];
        let cfg = TrainConfig {
            batch_size: 16,
            learning_rate: 0.01,
            max_epochs: 40,
            patience: 40,
            n_label_bins: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let model = init_model(7, 3, 8, 2, 4);
        let (trained, history) = train(
            model,
            &TrainSet {
                graphs: &train_graphs,
                targets: &train_targets,
            },
            &TrainSet {
                graphs: &val_graphs,
                targets: &val_targets,
            },
            &cfg,
        )
        .unwrap();
        assert!(trained.params_finite());
        assert_eq!(history.train_loss.len(), history.val_loss.len());

        let embeddings = crate::encoder::encode_all(&trained, &graphs).unwrap();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for i in 0..graphs.len() {
            for j in (i + 1)..graphs.len() {
                let d: f64 = embeddings[i]
                    .iter()
                    .zip(&embeddings[j])
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if family[i] == family[j] {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(median(&mut inter) > median(&mut intra));
    }
}

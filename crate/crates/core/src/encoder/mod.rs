//! Degree-parameterized message-passing encoder mapping attributed job DAGs
//! to fixed-size embeddings.
//!
//! Each layer holds one (self-weight, neighbor-weight, bias) triple per
//! clamped undirected degree. A node update is
//! `x_i <- ELU(W1[d(i)] x_i + W2[d(i)] sum_{j in N(i)} x_j + b[d(i)])`
//! with `N(i)` the union of in- and out-neighbors and
//! `d(i) = min(|N(i)|, max_degree)`. The graph embedding is the node mean of
//! the last layer, with inverted dropout applied during training.

pub mod loss;
pub mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, JobGraph};

/// Degree buckets beyond this are clamped together.
pub const DEFAULT_MAX_DEGREE: usize = 10;
/// Width of the hidden layers and the final embedding.
pub const EMBEDDING_DIM: usize = 64;
/// Number of message-passing layers.
pub const N_LAYERS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("node feature vector has {found} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot embed a graph with no nodes")]
    EmptyGraph,
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("non-finite model parameter after update at epoch {epoch}")]
    NonFiniteParams { epoch: usize },
}

/// Graph in the form the encoder consumes: raw per-node feature vectors and
/// the undirected neighbor sets (sorted, deduplicated).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub node_features: Vec<Vec<f64>>,
    pub neighbors: Vec<Vec<usize>>,
}

impl GraphInput {
    pub fn from_graph(graph: &JobGraph) -> Result<Self, GraphError> {
        let adjacency = graph.adjacency()?;
        let node_features = graph
            .nodes
            .iter()
            .map(|n| n.features.to_vec())
            .collect();
        Ok(GraphInput {
            node_features,
            neighbors: adjacency.undirected_neighbors(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_features.len()
    }
}

/// Per-dimension z-scoring statistics fitted on the training set's nodes.
/// Zero-variance dimensions map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl FeatureScaler {
    /// Identity scaler: leaves features untouched.
    pub fn identity(dim: usize) -> Self {
        FeatureScaler {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
        }
    }

    /// Population mean/std over every node of every graph.
    pub fn fit(graphs: &[GraphInput], dim: usize) -> Self {
        let mut means = vec![0.0; dim];
        let mut count = 0usize;
        for g in graphs {
            for node in &g.node_features {
                for (m, &v) in means.iter_mut().zip(node) {
                    *m += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return FeatureScaler::identity(dim);
        }
        for m in &mut means {
            *m /= count as f64;
        }
        let mut stds = vec![0.0; dim];
        for g in graphs {
            for node in &g.node_features {
                for ((s, &m), &v) in stds.iter_mut().zip(&means).zip(node) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        for s in &mut stds {
            *s = (*s / count as f64).sqrt();
        }
        FeatureScaler { means, stds }
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&v, &m), &s)| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// One layer's parameters, one weight set per clamped degree.
/// `w1[d][o][i]` multiplies the node's own features, `w2[d][o][i]` the
/// neighbor sum, `bias[d][o]` is added; `o` indexes output dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w1: Vec<Vec<Vec<f64>>>,
    pub w2: Vec<Vec<Vec<f64>>>,
    pub bias: Vec<Vec<f64>>,
}

impl LayerParams {
    fn zeros(n_degrees: usize, in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            w1: vec![vec![vec![0.0; in_dim]; out_dim]; n_degrees],
            w2: vec![vec![vec![0.0; in_dim]; out_dim]; n_degrees],
            bias: vec![vec![0.0; out_dim]; n_degrees],
        }
    }

    fn in_dim(&self) -> usize {
        self.w1[0][0].len()
    }

    fn out_dim(&self) -> usize {
        self.w1[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub max_degree: usize,
    pub scaler: FeatureScaler,
    pub layers: Vec<LayerParams>,
}

/// A graph embedding tagged with the job it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub job_name: String,
    pub g: Vec<f64>,
}

/// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
/// Draw order is fixed: layer-major, then degree, then w1 rows, then w2
/// rows, each row in input order.
pub fn init_model(
    seed: u64,
    in_dim: usize,
    hidden_dim: usize,
    n_layers: usize,
    max_degree: usize,
) -> EncoderModel {
    assert!(in_dim > 0 && hidden_dim > 0 && n_layers > 0, "dims must be positive");
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_degrees = max_degree + 1;
    let layers = (0..n_layers)
        .map(|k| {
            let layer_in = if k == 0 { in_dim } else { hidden_dim };
            let mut layer = LayerParams::zeros(n_degrees, layer_in, hidden_dim);
            let limit = (6.0 / (layer_in + hidden_dim) as f64).sqrt();
            for d in 0..n_degrees {
                for matrix in [&mut layer.w1[d], &mut layer.w2[d]] {
                    for row in matrix.iter_mut() {
                        for w in row.iter_mut() {
                            *w = rng.gen_range(-limit..limit);
                        }
                    }
                }
            }
            layer
        })
        .collect();
    EncoderModel {
        in_dim,
        hidden_dim,
        max_degree,
        scaler: FeatureScaler::identity(in_dim),
        layers,
    }
}

impl EncoderModel {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Flat parameter vector in the canonical order: per layer, per degree,
    /// w1 row-major, w2 row-major, bias.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            for d in 0..layer.w1.len() {
                for row in &layer.w1[d] {
                    flat.extend_from_slice(row);
                }
                for row in &layer.w2[d] {
                    flat.extend_from_slice(row);
                }
                flat.extend_from_slice(&layer.bias[d]);
            }
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for layer in &mut self.layers {
            for d in 0..layer.w1.len() {
                for row in &mut layer.w1[d] {
                    for w in row.iter_mut() {
                        *w = *it.next().expect("flat parameter vector too short");
                    }
                }
                for row in &mut layer.w2[d] {
                    for w in row.iter_mut() {
                        *w = *it.next().expect("flat parameter vector too short");
                    }
                }
                for b in &mut layer.bias[d] {
                    *b = *it.next().expect("flat parameter vector too short");
                }
            }
        }
        assert!(it.next().is_none(), "flat parameter vector too long");
    }

    /// Marks which flat-vector slots belong to weight matrices (true) as
    /// opposed to biases (false); the L2 penalty covers only weights.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        for layer in &self.layers {
            let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
            for _ in 0..layer.w1.len() {
                mask.extend(std::iter::repeat(true).take(2 * in_dim * out_dim));
                mask.extend(std::iter::repeat(false).take(out_dim));
            }
        }
        mask
    }

    /// Sum of squared weight-matrix entries (biases excluded).
    pub fn weight_squared_norm(&self) -> f64 {
        let mut total = 0.0;
        for layer in &self.layers {
            for d in 0..layer.w1.len() {
                for matrix in [&layer.w1[d], &layer.w2[d]] {
                    for row in matrix {
                        for &w in row {
                            total += w * w;
                        }
                    }
                }
            }
        }
        total
    }

    pub fn params_finite(&self) -> bool {
        self.flatten_params().iter().all(|p| p.is_finite())
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

fn elu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Inverted-dropout mask on the pooled embedding: dropped coordinates zero,
/// kept ones scaled by 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn sample(dim: usize, dropout_p: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&dropout_p));
        DropoutMask {
            keep: (0..dim).map(|_| !rng.gen_bool(dropout_p)).collect(),
            scale: 1.0 / (1.0 - dropout_p),
        }
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v * self.scale } else { 0.0 })
            .collect()
    }
}

/// Forward pass with every intermediate needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// xs[k][i]: node i's activations entering layer k (xs[0] is the scaled
    /// input); xs[K][i] is the final node state.
    xs: Vec<Vec<Vec<f64>>>,
    /// zs[k][i]: node i's pre-activation inside layer k.
    zs: Vec<Vec<Vec<f64>>>,
    pub pooled: Vec<f64>,
    pub output: Vec<f64>,
}

fn clamped_degree(neighbors: &[usize], max_degree: usize) -> usize {
    neighbors.len().min(max_degree)
}

/// Runs the network over one graph. `mask` present means train mode.
pub fn forward_trace(
    model: &EncoderModel,
    graph: &GraphInput,
    mask: Option<&DropoutMask>,
) -> Result<ForwardTrace, EncoderError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    for node in &graph.node_features {
        if node.len() != model.in_dim {
            return Err(EncoderError::DimensionMismatch {
                expected: model.in_dim,
                found: node.len(),
            });
        }
    }
    let mut xs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(model.n_layers() + 1);
    xs.push(
        graph
            .node_features
            .iter()
            .map(|f| model.scaler.apply(f))
            .collect(),
    );
    let mut zs = Vec::with_capacity(model.n_layers());
    for layer in &model.layers {
        let prev = xs.last().unwrap();
        let out_dim = layer.out_dim();
        let mut layer_z = Vec::with_capacity(n);
        let mut layer_x = Vec::with_capacity(n);
        for i in 0..n {
            let d = clamped_degree(&graph.neighbors[i], model.max_degree);
            let mut neighbor_sum = vec![0.0; prev[i].len()];
            for &j in &graph.neighbors[i] {
                for (s, &v) in neighbor_sum.iter_mut().zip(&prev[j]) {
                    *s += v;
                }
            }
            let mut z = layer.bias[d].clone();
            for o in 0..out_dim {
                let mut acc = z[o];
                for (inp, &x) in prev[i].iter().enumerate() {
                    acc += layer.w1[d][o][inp] * x;
                }
                for (inp, &s) in neighbor_sum.iter().enumerate() {
                    acc += layer.w2[d][o][inp] * s;
                }
                z[o] = acc;
            }
            layer_x.push(z.iter().map(|&v| elu(v)).collect::<Vec<f64>>());
            layer_z.push(z);
        }
        zs.push(layer_z);
        xs.push(layer_x);
    }
    let last = xs.last().unwrap();
    let mut pooled = vec![0.0; model.hidden_dim];
    for node in last {
        for (p, &v) in pooled.iter_mut().zip(node) {
            *p += v;
        }
    }
    for p in &mut pooled {
        *p /= n as f64;
    }
    let output = match mask {
        Some(m) => m.apply(&pooled),
        None => pooled.clone(),
    };
    Ok(ForwardTrace {
        xs,
        zs,
        pooled,
        output,
    })
}

/// Eval-mode embedding of one graph.
pub fn embed(model: &EncoderModel, graph: &GraphInput) -> Result<Vec<f64>, EncoderError> {
    Ok(forward_trace(model, graph, None)?.output)
}

/// Eval-mode embeddings for every graph, rows in input order.
pub fn encode_all(
    model: &EncoderModel,
    graphs: &[GraphInput],
) -> Result<Vec<Vec<f64>>, EncoderError> {
    graphs.iter().map(|g| embed(model, g)).collect()
}

/// Parameter gradients, same shapes as the model's layers.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub layers: Vec<LayerParams>,
}

impl ModelGrads {
    pub fn zeros(model: &EncoderModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerParams::zeros(l.w1.len(), l.in_dim(), l.out_dim()))
            .collect();
        ModelGrads { layers }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            for d in 0..layer.w1.len() {
                for row in &layer.w1[d] {
                    flat.extend_from_slice(row);
                }
                for row in &layer.w2[d] {
                    flat.extend_from_slice(row);
                }
                flat.extend_from_slice(&layer.bias[d]);
            }
        }
        flat
    }
}

/// Backpropagates d(loss)/d(output) through the trace, accumulating
/// parameter gradients into `grads`.
pub fn backward(
    model: &EncoderModel,
    graph: &GraphInput,
    trace: &ForwardTrace,
    d_output: &[f64],
    mask: Option<&DropoutMask>,
    grads: &mut ModelGrads,
) {
    let n = graph.node_count();
    let d_pooled: Vec<f64> = match mask {
        Some(m) => d_output
            .iter()
            .zip(&m.keep)
            .map(|(&g, &k)| if k { g * m.scale } else { 0.0 })
            .collect(),
        None => d_output.to_vec(),
    };
    // d(pooled)/d(x_i^(K)) = 1/n.
    let mut d_x: Vec<Vec<f64>> = (0..n)
        .map(|_| d_pooled.iter().map(|&g| g / n as f64).collect())
        .collect();
    for (k, layer) in model.layers.iter().enumerate().rev() {
        let prev = &trace.xs[k];
        let in_dim = layer.in_dim();
        let mut d_prev: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; n];
        for i in 0..n {
            let d = clamped_degree(&graph.neighbors[i], model.max_degree);
            let dz: Vec<f64> = d_x[i]
                .iter()
                .zip(&trace.zs[k][i])
                .map(|(&dx, &z)| dx * elu_prime(z))
                .collect();
            let mut neighbor_sum = vec![0.0; in_dim];
            for &j in &graph.neighbors[i] {
                for (s, &v) in neighbor_sum.iter_mut().zip(&prev[j]) {
                    *s += v;
                }
            }
            let g_layer = &mut grads.layers[k];
            for (o, &dzo) in dz.iter().enumerate() {
                g_layer.bias[d][o] += dzo;
                for inp in 0..in_dim {
                    g_layer.w1[d][o][inp] += dzo * prev[i][inp];
                    g_layer.w2[d][o][inp] += dzo * neighbor_sum[inp];
                }
            }
            for inp in 0..in_dim {
                let mut acc = 0.0;
                for (o, &dzo) in dz.iter().enumerate() {
                    acc += layer.w1[d][o][inp] * dzo;
                }
                d_prev[i][inp] += acc;
            }
            for &j in &graph.neighbors[i] {
                for inp in 0..in_dim {
                    let mut acc = 0.0;
                    for (o, &dzo) in dz.iter().enumerate() {
                        acc += layer.w2[d][o][inp] * dzo;
                    }
                    d_prev[j][inp] += acc;
                }
            }
        }
        d_x = d_prev;
    }
}

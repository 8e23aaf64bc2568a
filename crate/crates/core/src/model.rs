//! Small fully connected network with explicit forward and backward
//! passes. Hidden layers use ReLU; the last hidden layer's activations are
//! the feature vector fed to the contrastive loss, the final linear layer
//! produces logits. Optimization is SGD with momentum, weight decay and a
//! step learning-rate schedule. All arithmetic is f64.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major, shape (out, in).
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Per-dimension input standardization fitted on the training set and
/// carried with the parameters, so evaluation and checkpoints see the same
/// transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(inputs: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("no inputs to fit".into()));
        }
        let d = inputs[0].len();
        let n = inputs.len() as f64;
        let mut mean = vec![0.0; d];
        for row in inputs {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in inputs {
            for ((v, m), &x) in var.iter_mut().zip(&mean).zip(row) {
                *v += (x - m) * (x - m) / n;
            }
        }
        // constant dimensions pass through unscaled
        let std = var
            .iter()
            .map(|v| if v.sqrt() > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Applied to every input row before the first layer, when present.
    #[serde(default)]
    pub normalizer: Option<Normalizer>,
}

/// Gradients shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Elementwise sum, for merging the two loss paths' contributions.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ra, rb) in a.weights.iter_mut().zip(&b.weights) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
}

impl NetworkParams {
    /// He initialization scaled by fan-in; biases start at zero.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 3 {
            return Err(Error::InvalidArgument(
                "need at least input, one hidden, and output dims".into(),
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("zero layer dim".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let num_layers = layer_dims.len() - 1;
        for (l, w) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let weights = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| normal.sample(&mut rng)).collect())
                .collect();
            // hidden biases start slightly positive so every rectified
            // unit is initially active
            let bias = if l < num_layers - 1 { 0.1 } else { 0.0 };
            layers.push(Layer {
                weights,
                bias: vec![bias; fan_out],
            });
        }
        Ok(Self {
            dims: layer_dims.to_vec(),
            layers,
            normalizer: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Width of the feature layer (last hidden layer).
    pub fn feature_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.iter().map(|r| vec![0.0; r.len()]).collect(),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Append one output class: a new He-initialized row in the final
    /// layer (used when detected noisy samples are relabeled to a fresh
    /// class).
    pub fn add_output_class(&mut self, seed: u64) {
        let last = self.layers.last_mut().unwrap();
        let fan_in = last.weights[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        last.weights
            .push((0..fan_in).map(|_| normal.sample(&mut rng)).collect());
        last.bias.push(0.0);
        *self.dims.last_mut().unwrap() += 1;
    }

    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<ForwardTrace> {
        for row in batch {
            if row.len() != self.input_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "input dim {} != {}",
                    row.len(),
                    self.input_dim()
                )));
            }
            if !row.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("forward input".into()));
            }
        }
        let num_layers = self.layers.len();
        let input: Vec<Vec<f64>> = match &self.normalizer {
            Some(norm) => batch.iter().map(|r| norm.apply(r)).collect(),
            None => batch.to_vec(),
        };
        let mut activations: Vec<Vec<Vec<f64>>> = vec![input];
        let mut pre_activations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(num_layers);
        for (l, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let mut z_batch = Vec::with_capacity(batch.len());
            for row in input {
                let z: Vec<f64> = layer
                    .weights
                    .iter()
                    .zip(&layer.bias)
                    .map(|(w, b)| w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
                    .collect();
                z_batch.push(z);
            }
            let is_output = l == num_layers - 1;
            let a_batch = if is_output {
                z_batch.clone()
            } else {
                z_batch
                    .iter()
                    .map(|z| z.iter().map(|&v| v.max(0.0)).collect())
                    .collect()
            };
            pre_activations.push(z_batch);
            activations.push(a_batch);
        }
        Ok(ForwardTrace {
            pre_activations,
            activations,
        })
    }
}

/// Per-layer pre-activations and activations retained for backprop.
///
/// `activations[0]` is the input batch; `activations[l + 1]` is layer l's
/// output. Features are the activations of the last hidden layer, logits
/// the final linear output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pre_activations: Vec<Vec<Vec<f64>>>,
    activations: Vec<Vec<Vec<f64>>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.activations[0].len()
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        self.activations.last().unwrap()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.activations[self.activations.len() - 2]
    }

    /// Backpropagate both loss paths: `d_logits` enters at the output,
    /// `d_features` (if any) is added where the contrastive path joins the
    /// shared trunk at the feature layer.
    pub fn backward(
        &self,
        params: &NetworkParams,
        d_logits: &[Vec<f64>],
        d_features: Option<&[Vec<f64>]>,
    ) -> Result<Gradients> {
        let batch = self.batch_size();
        if d_logits.len() != batch
            || d_logits.iter().any(|r| r.len() != params.output_dim())
        {
            return Err(Error::DimensionMismatch("d_logits shape".into()));
        }
        if let Some(df) = d_features {
            if df.len() != batch || df.iter().any(|r| r.len() != params.feature_dim()) {
                return Err(Error::DimensionMismatch("d_features shape".into()));
            }
        }
        let num_layers = params.layers.len();
        let mut grads = params.zeros_like();
        // delta = dL/dz for the current layer, per batch row
        let mut delta: Vec<Vec<f64>> = d_logits.to_vec();
        for l in (0..num_layers).rev() {
            let layer = &params.layers[l];
            let input = &self.activations[l];
            let g = &mut grads.layers[l];
            for (row_delta, row_in) in delta.iter().zip(input) {
                for (o, &d) in row_delta.iter().enumerate() {
                    g.bias[o] += d;
                    for (wi, &xi) in g.weights[o].iter_mut().zip(row_in) {
                        *wi += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // gradient w.r.t. this layer's input activation
            let mut d_act: Vec<Vec<f64>> = delta
                .iter()
                .map(|row_delta| {
                    (0..layer.weights[0].len())
                        .map(|i| {
                            row_delta
                                .iter()
                                .zip(&layer.weights)
                                .map(|(&d, w)| d * w[i])
                                .sum()
                        })
                        .collect()
                })
                .collect();
            // the contrastive path merges at the feature layer
            if l == num_layers - 1 {
                if let Some(df) = d_features {
                    for (row, row_df) in d_act.iter_mut().zip(df) {
                        for (a, b) in row.iter_mut().zip(row_df) {
                            *a += b;
                        }
                    }
                }
            }
            let z = &self.pre_activations[l - 1];
            delta = d_act
                .iter()
                .zip(z)
                .map(|(row, z_row)| {
                    row.iter()
                        .zip(z_row)
                        .map(|(&d, &zi)| if zi > 0.0 { d } else { 0.0 })
                        .collect()
                })
                .collect();
        }
        Ok(grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Gradients,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            velocity: params.zeros_like(),
            lr,
            momentum,
            weight_decay,
        }
    }

    /// Extend velocity buffers with zero rows for newly added outputs.
    pub fn grow_to(&mut self, params: &NetworkParams) {
        for (v, p) in self.velocity.layers.iter_mut().zip(&params.layers) {
            while v.weights.len() < p.weights.len() {
                v.weights.push(vec![0.0; p.weights[0].len()]);
                v.bias.push(0.0);
            }
        }
    }
}

/// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v
pub fn sgd_step(
    params: &mut NetworkParams,
    opt: &mut OptimizerState,
    grads: &Gradients,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::DimensionMismatch("gradient layer count".into()));
    }
    for l in 0..params.layers.len() {
        let (p, g, v) = (
            &mut params.layers[l],
            &grads.layers[l],
            &mut opt.velocity.layers[l],
        );
        if g.bias.len() != p.bias.len() || g.weights.len() != p.weights.len() {
            return Err(Error::DimensionMismatch("gradient shape".into()));
        }
        for o in 0..p.weights.len() {
            for i in 0..p.weights[o].len() {
                let grad = g.weights[o][i];
                if !grad.is_finite() {
                    return Err(Error::NonFinite("weight gradient".into()));
                }
                v.weights[o][i] =
                    opt.momentum * v.weights[o][i] + grad + opt.weight_decay * p.weights[o][i];
                p.weights[o][i] -= opt.lr * v.weights[o][i];
            }
            let grad = g.bias[o];
            if !grad.is_finite() {
                return Err(Error::NonFinite("bias gradient".into()));
            }
            v.bias[o] = opt.momentum * v.bias[o] + grad + opt.weight_decay * p.bias[o];
            p.bias[o] -= opt.lr * v.bias[o];
        }
    }
    Ok(())
}

/// Step schedule: the base rate divided by `factor` at each epoch in
/// `drops`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub drops: Vec<usize>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 0.01,
            drops: vec![40, 80],
            factor: 10.0,
        }
    }
}

pub fn lr_at(epoch: usize, schedule: &LrSchedule) -> f64 {
    let n_drops = schedule.drops.iter().filter(|&&d| epoch >= d).count();
    schedule.base / schedule.factor.powi(n_drops as i32)
}

/// Versioned checkpoint: parameters plus enough metadata to re-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub epoch: usize,
    pub params: NetworkParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(
    params: &NetworkParams,
    seed: u64,
    epoch: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        dims: params.dims.clone(),
        seed,
        epoch,
        params: params.clone(),
    };
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, &ckpt)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: Checkpoint = serde_json::from_reader(f)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Malformed(format!(
            "checkpoint version {} unsupported",
            ckpt.version
        )));
    }
    if ckpt.dims != ckpt.params.dims {
        return Err(Error::Malformed("checkpoint dims mismatch".into()));
    }
    Ok(ckpt)
}

//! A symmetric dense autoencoder trained with Adam on mean squared error.
//!
//! Widths run `d → h₁ → … → N → … → h₁ → d`. Hidden layers use relu, the
//! layer producing the N-wide latent code is linear, and the output layer
//! uses [`AeConfig::output_activation`]. [`encode`] returns the latent code.
//!
//! All parameters live in one flat vector. Layer `l` stores its weights
//! row-major as `W[o][i]` followed by its biases, so gradients and Adam
//! moments share the same layout.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("input has {found} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid autoencoder config: {0}")]
    InvalidConfig(String),
    #[error("no training rows")]
    EmptyData,
    #[error("model version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("model: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "gradient length");
    assert_eq!(params.len(), state.m.len(), "moment length");
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub output_activation: Activation,
    pub seed: u64,
}

impl AeConfig {
    /// Defaults: hidden widths `[35, 28]`, 50 epochs, batches of 50, standard Adam.
    pub fn new(input_dim: usize, latent_dim: usize) -> Self {
        AeConfig {
            input_dim,
            hidden_widths: vec![35, 28],
            latent_dim,
            epochs: 50,
            batch_size: 50,
            adam: AdamConfig::default(),
            output_activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AeError> {
        let bad = |m: &str| Err(AeError::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(a.epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        Ok(())
    }

    /// Layer widths from input to reconstruction.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_widths);
        w.push(self.latent_dim);
        w.extend(self.hidden_widths.iter().rev());
        w.push(self.input_dim);
        w
    }

    /// Number of layers from the input up to and including the latent layer.
    pub fn encoder_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub offset: usize,
}

impl LayerShape {
    fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    fn len(&self) -> usize {
        self.weight_len() + self.outputs
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }
}

fn layer_shapes(config: &AeConfig) -> Vec<LayerShape> {
    let widths = config.widths();
    let last = widths.len() - 2;
    let latent = config.encoder_layers() - 1;
    let mut offset = 0;
    widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let activation = if l == latent {
                Activation::Linear
            } else if l == last {
                config.output_activation
            } else {
                Activation::Relu
            };
            let shape = LayerShape {
                inputs: w[0],
                outputs: w[1],
                activation,
                offset,
            };
            offset += shape.len();
            shape
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    config: AeConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: AeConfig,
    params: Vec<f64>,
    adam: AdamState,
}

/// Activations of one forward pass over a batch: `pre[l]` and `post[l]` are
/// `rows × outputs(l)`, row-major.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl AeModel {
    /// Glorot-uniform weights drawn from `config.seed`, zero biases.
    pub fn init(config: AeConfig) -> Result<Self, AeError> {
        config.validate()?;
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        for layer in &model.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for p in &mut model.params[layer.offset..layer.bias_offset()] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// A model whose weights and biases are all zero.
    pub fn zeros(config: AeConfig) -> Result<Self, AeError> {
        config.validate()?;
        let layers = layer_shapes(&config);
        let len = layers.last().map_or(0, |l| l.offset + l.len());
        Ok(AeModel {
            config,
            layers,
            params: vec![0.0; len],
            adam: AdamState::new(len),
        })
    }

    pub fn config(&self) -> &AeConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn check_width(&self, x: &Matrix) -> Result<(), AeError> {
        if x.cols() != self.config.input_dim {
            return Err(AeError::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.cols(),
            });
        }
        Ok(())
    }

    fn forward(&self, input: &[f64], rows: usize, n_layers: usize) -> Trace {
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        for layer in &self.layers[..n_layers] {
            let x = post.last().map_or(input, Vec::as_slice);
            let w = &self.params[layer.offset..layer.bias_offset()];
            let b = &self.params[layer.bias_offset()..layer.offset + layer.len()];
            let mut z = vec![0.0; rows * layer.outputs];
            for r in 0..rows {
                let xr = &x[r * layer.inputs..(r + 1) * layer.inputs];
                let zr = &mut z[r * layer.outputs..(r + 1) * layer.outputs];
                for (o, zo) in zr.iter_mut().enumerate() {
                    let wo = &w[o * layer.inputs..(o + 1) * layer.inputs];
                    *zo = b[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        Trace { pre, post }
    }

    /// Mean squared reconstruction error over all entries of `input`, and
    /// its gradient with respect to [`Self::params`].
    fn batch_loss_grad(&self, input: &[f64], rows: usize, grad: &mut [f64]) -> f64 {
        let d = self.config.input_dim;
        let trace = self.forward(input, rows, self.layers.len());
        let out = trace.post.last().expect("at least one layer");
        let scale = 1.0 / (rows * d) as f64;
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(input)
            .zip(&trace.pre[last])
            .map(|((&y, &x), &z)| {
                let e = y - x;
                loss += e * e;
                2.0 * e * scale * self.layers[last].activation.derivative(z)
            })
            .collect();
        grad.fill(0.0);
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let x = if l == 0 { input } else { &trace.post[l - 1] };
            let (gw, gb) = grad[layer.offset..layer.offset + layer.len()].split_at_mut(layer.weight_len());
            for r in 0..rows {
                let xr = &x[r * layer.inputs..(r + 1) * layer.inputs];
                let dr = &delta[r * layer.outputs..(r + 1) * layer.outputs];
                for (o, &g) in dr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    for (gwi, &xi) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(xr) {
                        *gwi += g * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[layer.offset..layer.bias_offset()];
            let prev = self.layers[l - 1];
            let mut next = vec![0.0; rows * layer.inputs];
            for r in 0..rows {
                let dr = &delta[r * layer.outputs..(r + 1) * layer.outputs];
                let nr = &mut next[r * layer.inputs..(r + 1) * layer.inputs];
                for (o, &g) in dr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (ni, &wi) in nr.iter_mut().zip(&w[o * layer.inputs..(o + 1) * layer.inputs]) {
                        *ni += g * wi;
                    }
                }
                let zr = &trace.pre[l - 1][r * layer.inputs..(r + 1) * layer.inputs];
                for (ni, &z) in nr.iter_mut().zip(zr) {
                    *ni *= prev.activation.derivative(z);
                }
            }
            delta = next;
        }
        loss * scale
    }

    /// Full-batch loss and gradient.
    pub fn loss_and_gradient(&self, x: &Matrix) -> Result<(f64, Vec<f64>), AeError> {
        self.check_width(x)?;
        if x.rows() == 0 {
            return Err(AeError::EmptyData);
        }
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.batch_loss_grad(x.as_slice(), x.rows(), &mut grad);
        Ok((loss, grad))
    }

    /// Mean squared error of [`reconstruct`] against `x`.
    pub fn mse(&self, x: &Matrix) -> Result<f64, AeError> {
        let y = reconstruct(self, x)?;
        let n = (x.rows() * x.cols()) as f64;
        Ok(y.as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }

    /// Whether each relu unit is active, for every row and relu layer.
    /// Relu outputs are differentiable wherever this pattern is locally constant.
    pub fn relu_pattern(&self, x: &Matrix) -> Result<Vec<bool>, AeError> {
        self.check_width(x)?;
        let trace = self.forward(x.as_slice(), x.rows(), self.layers.len());
        Ok(self
            .layers
            .iter()
            .zip(&trace.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            version: MODEL_VERSION,
            config: self.config.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AeError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(AeError::UnsupportedVersion(file.version));
        }
        let mut model = Self::zeros(file.config)?;
        if file.params.len() != model.params.len()
            || file.adam.m.len() != model.params.len()
            || file.adam.v.len() != model.params.len()
        {
            return Err(AeError::InvalidConfig(
                "parameter count does not match the layer shapes".into(),
            ));
        }
        model.params = file.params;
        model.adam = file.adam;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AeError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trains a fresh model on `x`. `loss_history[e]` is the full-batch MSE after
/// the updates of epoch `e`.
pub fn train(x: &Matrix, config: &AeConfig) -> Result<(AeModel, Vec<f64>), AeError> {
    let mut model = AeModel::init(config.clone())?;
    if x.cols() != config.input_dim {
        return Err(AeError::DimensionMismatch {
            expected: config.input_dim,
            found: x.cols(),
        });
    }
    if x.rows() == 0 {
        return Err(AeError::EmptyData);
    }
    let history = continue_training(&mut model, x, config.epochs)?;
    Ok((model, history))
}

/// Runs `epochs` more epochs on an existing model. Shuffles derive from the
/// seed and the optimizer step count.
pub fn continue_training(model: &mut AeModel, x: &Matrix, epochs: usize) -> Result<Vec<f64>, AeError> {
    model.check_width(x)?;
    let n = x.rows();
    let d = x.cols();
    let batch = model.config.batch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    rng.set_stream(1 + model.adam.step);
    let mut order: Vec<usize> = (0..n).collect();
    let mut buf = Vec::with_capacity(batch * d);
    let mut grad = vec![0.0; model.params.len()];
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            buf.clear();
            for &i in chunk {
                buf.extend_from_slice(x.row(i));
            }
            let loss = model.batch_loss_grad(&buf, chunk.len(), &mut grad);
            if !loss.is_finite() {
                return Err(AeError::NonFiniteLoss { epoch });
            }
            adam_step(&mut model.params, &grad, &mut model.adam, &model.config.adam);
        }
        let loss = model.mse(x)?;
        if !loss.is_finite() {
            return Err(AeError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }
    Ok(history)
}

/// Latent code of every row, `rows × N`.
pub fn encode(model: &AeModel, x: &Matrix) -> Result<Matrix, AeError> {
    model.check_width(x)?;
    let k = model.config.encoder_layers();
    let mut trace = model.forward(x.as_slice(), x.rows(), k);
    let z = trace.post.pop().expect("encoder has layers");
    Ok(Matrix::from_vec(x.rows(), model.config.latent_dim, z))
}

/// Full forward pass, `rows × d`.
pub fn reconstruct(model: &AeModel, x: &Matrix) -> Result<Matrix, AeError> {
    model.check_width(x)?;
    let mut trace = model.forward(x.as_slice(), x.rows(), model.layers.len());
    let y = trace.post.pop().expect("decoder has layers");
    Ok(Matrix::from_vec(x.rows(), model.config.input_dim, y))
}

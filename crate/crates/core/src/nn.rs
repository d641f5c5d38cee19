//! Multilayer perceptrons with hand-written reverse mode, the binary
//! cross-entropy discriminator loss, and Adam/SGD updates.
//!
//! Weights are stored `in × out` so a batch `X` (rows are samples) maps to
//! `X·W + b`. The "feature space" of a discriminator is the post-activation
//! output of its last hidden layer, i.e. everything but the final layer.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix, Vector};

/// Clamp applied to sigmoid outputs before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Linear => pre.clone(),
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Sigmoid => pre.map(sigmoid),
        }
    }

    /// Multiplies `grad` by the activation derivative, in place.
    fn backprop(self, pre: &Matrix, post: &Matrix, grad: &mut Matrix) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in grad.as_mut_slice().iter_mut().zip(post.as_slice()) {
                    *g *= s * (1.0 - s);
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine layer, `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: Vector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Per-parameter gradients, shaped like [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.dim() != l.outputs() {
                return Err(Error::Shape(format!("layer {k} bias has wrong length")));
            }
            if !l.weight.all_finite() || !l.bias.as_slice().iter().all(|v| v.is_finite()) {
                return Err(Error::Domain(format!(
                    "layer {k} has non-finite parameters"
                )));
            }
        }
        Ok(Self {
            layers,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    /// Weights `~ N(0, std²)`, zero biases. `dims` lists every width from
    /// input to output.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(
                "need at least input and output widths".into(),
            ));
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::from_fn(w[0], w[1], |_, _| normal.sample(rng)),
                bias: Vector::zeros(w[1]),
            })
            .collect();
        Self::new(layers, hidden, output)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.dim())
            .sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward_layers(
            &self.layers,
            self.hidden_activation,
            self.output_activation,
            x,
        )
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
    ) -> Result<(MlpGrads, Matrix)> {
        backward_layers(
            &self.layers,
            self.hidden_activation,
            self.output_activation,
            cache,
            grad_output,
        )
    }

    fn trunk(&self) -> Result<&[Layer]> {
        if self.layers.len() < 2 {
            return Err(Error::Config(
                "feature extraction needs at least one hidden layer".into(),
            ));
        }
        Ok(&self.layers[..self.layers.len() - 1])
    }

    /// Last hidden activations and the cache to backpropagate through them.
    pub fn features(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let trunk = self.trunk()?;
        forward_layers(trunk, self.hidden_activation, self.hidden_activation, x)
    }

    /// Backpropagates a feature-space gradient; the returned parameter
    /// gradients cover every layer, with zeros for the output layer.
    pub fn features_backward(
        &self,
        cache: &ForwardCache,
        grad_features: &Matrix,
    ) -> Result<(MlpGrads, Matrix)> {
        let trunk = self.trunk()?;
        let (mut grads, gx) = backward_layers(
            trunk,
            self.hidden_activation,
            self.hidden_activation,
            cache,
            grad_features,
        )?;
        let last = &self.layers[self.layers.len() - 1];
        grads
            .layers
            .push(Layer::zeros(last.inputs(), last.outputs()));
        Ok((grads, gx))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    fn check_grads(&self, grads: &MlpGrads) -> Result<()> {
        let ok =
            grads.layers.len() == self.layers.len()
                && grads.layers.iter().zip(&self.layers).all(|(g, p)| {
                    g.weight.dims() == p.weight.dims() && g.bias.dim() == p.bias.dim()
                });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(
                "gradients do not mirror the parameters".into(),
            ))
        }
    }

    /// Flat views of every parameter slice, in layer order (weight, then bias).
    fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

impl MlpGrads {
    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn all_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn forward_layers(
    layers: &[Layer],
    hidden: Activation,
    output: Activation,
    x: &Matrix,
) -> Result<(Matrix, ForwardCache)> {
    if x.cols() != layers[0].inputs() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            layers[0].inputs()
        )));
    }
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut current = x.clone();
    for (k, layer) in layers.iter().enumerate() {
        let mut z = matmul(&current, &layer.weight)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(layer.bias.as_slice()) {
                *v += b;
            }
        }
        let act = if k + 1 == layers.len() {
            output
        } else {
            hidden
        };
        let a = act.apply(&z);
        inputs.push(std::mem::replace(&mut current, a));
        pre.push(z);
    }
    let cache = ForwardCache {
        inputs,
        pre,
        output: current.clone(),
    };
    Ok((current, cache))
}

fn backward_layers(
    layers: &[Layer],
    hidden: Activation,
    output: Activation,
    cache: &ForwardCache,
    grad_output: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    if cache.pre.len() != layers.len() {
        return Err(Error::Shape(
            "forward cache does not match the network".into(),
        ));
    }
    if grad_output.dims() != cache.output.dims() {
        return Err(Error::Shape(format!(
            "output gradient {:?} vs output {:?}",
            grad_output.dims(),
            cache.output.dims()
        )));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut grad = grad_output.clone();
    for k in (0..layers.len()).rev() {
        let act = if k + 1 == layers.len() {
            output
        } else {
            hidden
        };
        let post = if k + 1 == layers.len() {
            &cache.output
        } else {
            &cache.inputs[k + 1]
        };
        act.backprop(&cache.pre[k], post, &mut grad);
        let weight = matmul_tn(&cache.inputs[k], &grad)?;
        let mut bias = vec![0.0; grad.cols()];
        for row in grad.row_iter() {
            for (b, g) in bias.iter_mut().zip(row) {
                *b += g;
            }
        }
        let next = matmul_nt(&grad, &layers[k].weight)?;
        grads.push(Layer {
            weight,
            bias: Vector::from(bias),
        });
        grad = next;
    }
    grads.reverse();
    Ok((MlpGrads { layers: grads }, grad))
}

pub fn mlp_forward(params: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    params.forward(x)
}

pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    params.backward(cache, grad_output)
}

/// Activations feeding the final layer of a discriminator.
pub fn extract_features(params: &MlpParams, x: &Matrix) -> Result<Matrix> {
    params.features(x).map(|(f, _)| f)
}

/// Mean-reduced discriminator cross-entropy and its input gradients.
#[derive(Debug, Clone)]
pub struct BceOutput {
    pub loss: f64,
    pub grad_real: Matrix,
    pub grad_fake: Matrix,
}

/// `mean(−log D(x)) + mean(−log(1 − D(x̃)))` over batches of probabilities.
pub fn bce_discriminator_loss(d_real: &Matrix, d_fake: &Matrix) -> Result<BceOutput> {
    let in_range = |m: &Matrix| m.as_slice().iter().all(|&p| p > 0.0 && p < 1.0);
    if !in_range(d_real) || !in_range(d_fake) {
        return Err(Error::Domain(
            "discriminator outputs must lie strictly inside (0, 1)".into(),
        ));
    }
    if d_real.is_empty_batch() || d_fake.is_empty_batch() {
        return Err(Error::Empty);
    }
    let br = d_real.as_slice().len() as f64;
    let bf = d_fake.as_slice().len() as f64;
    let loss_real: f64 = d_real.as_slice().iter().map(|p| -p.ln()).sum::<f64>() / br;
    let loss_fake: f64 = d_fake
        .as_slice()
        .iter()
        .map(|p| -(1.0 - p).ln())
        .sum::<f64>()
        / bf;
    Ok(BceOutput {
        loss: loss_real + loss_fake,
        grad_real: d_real.map(|p| -1.0 / (br * p)),
        grad_fake: d_fake.map(|p| 1.0 / (bf * (1.0 - p))),
    })
}

trait EmptyBatch {
    fn is_empty_batch(&self) -> bool;
}

impl EmptyBatch for Matrix {
    fn is_empty_batch(&self) -> bool {
        self.as_slice().is_empty()
    }
}

/// Clamps probabilities into `[eps, 1 − eps]`.
pub fn clamp_probabilities(p: &Matrix, eps: f64) -> Matrix {
    p.map(|v| v.clamp(eps, 1.0 - eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &MlpParams, hyper: AdamHyper) -> Self {
        let n = params.num_params();
        Self {
            hyper,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    params.check_grads(grads)?;
    if state.m.len() != params.num_params() {
        return Err(Error::Shape(
            "Adam state does not mirror the parameters".into(),
        ));
    }
    state.step += 1;
    let AdamHyper {
        lr,
        beta1,
        beta2,
        eps,
    } = state.hyper;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut idx = 0;
    for (p_slice, g_slice) in params.param_slices_mut().zip(grads.slices()) {
        for (p, &g) in p_slice.iter_mut().zip(g_slice) {
            let m = &mut state.m[idx];
            let v = &mut state.v[idx];
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            idx += 1;
        }
    }
    Ok(())
}

/// Plain gradient descent `θ ← θ − lr·∇`.
pub fn sgd_step(params: &mut MlpParams, grads: &MlpGrads, lr: f64) -> Result<()> {
    params.check_grads(grads)?;
    for (p_slice, g_slice) in params.param_slices_mut().zip(grads.slices()) {
        for (p, &g) in p_slice.iter_mut().zip(g_slice) {
            *p -= lr * g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam(AdamHyper),
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamHyper::default())
    }
}

/// Optimizer bound to one network's parameter layout.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &MlpParams) -> Self {
        match cfg {
            OptimizerConfig::Adam(h) => Optimizer::Adam(AdamState::new(params, h)),
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd { lr },
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        match self {
            Optimizer::Adam(state) => adam_step(params, grads, state),
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "fot-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized form of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub version: u32,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs × outputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&MlpParams> for MlpCheckpoint {
    fn from(p: &MlpParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hidden_activation: p.hidden_activation,
            output_activation: p.output_activation,
            layers: p
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weight: l.weight.as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpCheckpoint> for MlpParams {
    type Error = Error;

    fn try_from(c: MlpCheckpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        let layers = c
            .layers
            .into_iter()
            .map(|r| {
                Ok(Layer {
                    weight: Matrix::from_vec(r.inputs, r.outputs, r.weight)?,
                    bias: Vector::new(r.bias)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpParams::new(layers, c.hidden_activation, c.output_activation)
    }
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> std::io::Result<()> {
    let json =
        serde_json::to_string(&MlpCheckpoint::from(params)).map_err(std::io::Error::other)?;
    fs::write(path, json)
}

pub fn load_checkpoint(path: &Path) -> std::result::Result<MlpParams, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path)?;
    let ckpt: MlpCheckpoint = serde_json::from_str(&text)?;
    Ok(MlpParams::try_from(ckpt)?)
}

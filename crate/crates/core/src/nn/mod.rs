//! Dense feed-forward networks with independent sigmoid output heads,
//! hand-written reverse-mode gradients and an Adam optimizer.
//!
//! A network is a stack of affine layers `z = a·W + b` with `W` stored
//! `fan_in × fan_out`. Hidden layers apply the configured activation; the
//! last layer produces one logit per head. Everything is `f64`.

mod adam;
mod checkpoint;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng as _, SeedableRng};

use crate::error::{format_err, usage, Result};
use crate::Rng;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    /// Multiplies `upstream` in place by the activation derivative, given the
    /// pre-activation `z` and output `a`.
    fn backprop(self, upstream: &mut Array2<f64>, z: &Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(upstream).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(upstream).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            c => Err(format_err!("unknown activation code {c}")),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(usage!("unknown activation '{other}' (expected relu or tanh)")),
        }
    }
}

/// Shape and initialization of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    /// Number of sigmoid heads; single-task classifiers use 1.
    pub output_heads: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(usage!("input dimension must be positive"));
        }
        if self.output_heads == 0 {
            return Err(usage!("a network needs at least one output head"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(usage!("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(self.output_heads);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// Weights and bias of one affine layer. Also used to hold gradients and
/// optimizer moments of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }
}

/// Per-layer parameter gradients, shaped like [`Model::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self { layers: spec.layer_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0, |m, &g| m.max(g.abs()))
    }
}

/// Activations recorded by a forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (the batch itself for `l = 0`).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre_activations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

/// Network parameters plus the optimizer step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    pub layers: Vec<Dense>,
    /// Number of optimizer updates applied so far.
    pub step: u64,
}

impl Model {
    /// Uniform fan-in initialization in `±1/√fan_in`, zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::seed_from_u64(spec.init_seed);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit));
                Dense { weights, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Self { spec, layers, step: 0 })
    }

    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = Gradients::zeros_like(&spec).layers;
        Ok(Self { spec, layers, step: 0 })
    }

    pub(crate) fn from_parts(spec: NetworkSpec, layers: Vec<Dense>, step: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len()
            || shapes.iter().zip(&layers).any(|(&(i, o), l)| l.weights.dim() != (i, o) || l.bias.len() != o)
        {
            return Err(usage!("layer shapes do not match the network spec"));
        }
        Ok(Self { spec, layers, step })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.spec.input_dim {
            return Err(usage!("batch has {} features, network expects {}", batch.ncols(), self.spec.input_dim));
        }
        Ok(())
    }

    /// Head logits, `B × K`.
    pub fn logits(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&batch)?;
        let last = self.layers.len() - 1;
        let mut a = batch.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            a = if l == last { z } else { self.spec.activation.apply(&z) };
        }
        Ok(a)
    }

    /// Head probabilities `p̂_k(>|x)`, `B × K`, each in `(0, 1)` up to
    /// floating-point saturation.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.logits(batch)?.mapv_into(sigmoid))
    }

    /// Forward pass that keeps the intermediate values needed for backprop.
    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&batch)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut a = batch.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            inputs.push(a);
            if l == last {
                return Ok(ForwardCache { inputs, pre_activations, logits: z });
            }
            a = self.spec.activation.apply(&z);
            pre_activations.push(z);
        }
        unreachable!("a network has at least one layer")
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, logit_grad: ArrayView2<f64>) -> Result<Gradients> {
        if logit_grad.dim() != cache.logits.dim() {
            return Err(usage!("loss gradient shape {:?} does not match logits {:?}", logit_grad.dim(), cache.logits.dim()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut delta = logit_grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            layers.push(Dense { weights: input.t().dot(&delta), bias: delta.sum_axis(Axis(0)) });
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights.t());
                self.spec.activation.backprop(&mut upstream, &cache.pre_activations[l - 1], input);
                delta = upstream;
            }
        }
        layers.reverse();
        Ok(Gradients { layers })
    }

    /// Forward and backward in one call.
    pub fn gradients(&self, batch: ArrayView2<f64>, logit_grad: ArrayView2<f64>) -> Result<Gradients> {
        let cache = self.forward_cached(batch)?;
        self.backward(&cache, logit_grad)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` without forming `σ(z)`.
pub fn log_sigmoid(z: f64) -> f64 {
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

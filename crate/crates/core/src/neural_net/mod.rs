//! Small dense feed-forward networks in `f64`, with exact backpropagation,
//! the MSE objective and Adam.
//!
//! Weights are stored row-major (`out x in`). A forward pass fills a
//! [`ForwardCache`] that the matching backward pass consumes; the backward
//! pass also returns the gradient with respect to the network input so that
//! cascaded networks can be trained end to end.

mod adam;
mod loss;
mod persist;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::mse_loss;
pub use persist::{read_params, write_params, FORMAT_VERSION, MAGIC};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("network needs at least two layer sizes")]
    EmptyDims,
    #[error("expected {expected} activations, got {got}")]
    ActivationCount { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forward cache does not match this network")]
    StaleCache,
    #[error("parameter and gradient/optimizer shapes differ")]
    ShapeMismatch,
    #[error("bad magic bytes in weight file")]
    BadMagic,
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown activation tag {0}")]
    UnknownActivation(u8),
    #[error("weight file is inconsistent: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Softmax => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, NetError> {
        Ok(match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Softmax,
            t => return Err(NetError::UnknownActivation(t)),
        })
    }

    fn apply(self, pre: &[f64], post: &mut [f64]) {
        match self {
            Activation::Identity => post.copy_from_slice(pre),
            Activation::Relu => {
                for (o, &z) in post.iter_mut().zip(pre) {
                    *o = if z > 0.0 { z } else { 0.0 };
                }
            }
            Activation::Tanh => {
                for (o, &z) in post.iter_mut().zip(pre) {
                    *o = z.tanh();
                }
            }
            Activation::Softmax => softmax(pre, post),
        }
    }

    /// Turns `d(loss)/d(post)` into `d(loss)/d(pre)` in place.
    fn backprop(self, pre: &[f64], post: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &z) in grad.iter_mut().zip(pre) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &a) in grad.iter_mut().zip(post) {
                    *g *= 1.0 - a * a;
                }
            }
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(post).map(|(g, s)| g * s).sum();
                for (g, &s) in grad.iter_mut().zip(post) {
                    *g = s * (*g - dot);
                }
            }
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// One fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    /// Row-major `output x input`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            input,
            output,
            weights: vec![0.0; input * output],
            bias: vec![0.0; output],
            activation,
        }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.input))
            .zip(&self.bias)
        {
            *o = b + dot(row, x);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (lane, slot) in acc.iter_mut().enumerate() {
            *slot += a[4 * i + lane] * b[4 * i + lane];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Weights, biases and activation tags of one feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

impl MlpParams {
    /// Builds a network from explicit layers, checking that sizes chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::EmptyDims);
        }
        for l in &layers {
            if l.weights.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(NetError::ShapeMismatch);
            }
        }
        for w in layers.windows(2) {
            if w[0].output != w[1].input {
                return Err(NetError::DimensionMismatch {
                    expected: w[0].output,
                    got: w[1].input,
                });
            }
        }
        Ok(MlpParams { layers })
    }

    /// All-zero network of the given shape.
    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self, NetError> {
        check_dims(dims, activations)?;
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &a)| Dense::zeros(d[0], d[1], a))
            .collect();
        Self::from_layers(layers)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let mut p = Self::zeros(dims, activations)?;
        for l in &mut p.layers {
            let limit = (6.0 / (l.input + l.output) as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(p)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    /// Layer sizes, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.output))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat view used by optimizers and gradient checks: per layer, weights
    /// then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (layer, slot) = self.locate(index);
        let l = &self.layers[layer];
        if slot < l.weights.len() {
            l.weights[slot]
        } else {
            l.bias[slot - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, slot) = self.locate(index);
        let l = &mut self.layers[layer];
        if slot < l.weights.len() {
            l.weights[slot] = value;
        } else {
            let w = l.weights.len();
            l.bias[slot - w] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            let size = l.weights.len() + l.bias.len();
            if index < size {
                return (i, index);
            }
            index -= size;
        }
        panic!("parameter index out of range");
    }

    /// Runs the network and returns the output with its cache.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NetError> {
        let mut cache = ForwardCache::for_params(self);
        self.forward_into(input, &mut cache)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Forward pass reusing `cache`'s buffers; read the result from
    /// [`ForwardCache::output`].
    pub fn forward_into(&self, input: &[f64], cache: &mut ForwardCache) -> Result<(), NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if !cache.matches(self) {
            *cache = ForwardCache::for_params(self);
        }
        cache.input.copy_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = cache.post.split_at_mut(i);
            let x = if i == 0 {
                &cache.input[..]
            } else {
                &before[i - 1][..]
            };
            layer.affine(x, &mut cache.pre[i]);
            layer.activation.apply(&cache.pre[i], &mut after[0]);
        }
        Ok(())
    }

    /// Reverse-mode gradients for `d_output = d(loss)/d(output)`.
    ///
    /// Returns the parameter gradients and `d(loss)/d(input)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
    ) -> Result<(GradientSet, Vec<f64>), NetError> {
        let mut grads = GradientSet::zeros_like(self);
        let mut d_input = vec![0.0; self.input_dim()];
        self.backward_accumulate(cache, d_output, &mut grads, &mut d_input)?;
        Ok((grads, d_input))
    }

    /// Like [`backward`](Self::backward) but adds into `grads` and overwrites
    /// `d_input`.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        d_output: &[f64],
        grads: &mut GradientSet,
        d_input: &mut [f64],
    ) -> Result<(), NetError> {
        if !cache.matches(self) || !grads.matches(self) || d_input.len() != self.input_dim() {
            return Err(NetError::StaleCache);
        }
        if d_output.len() != self.output_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.output_dim(),
                got: d_output.len(),
            });
        }
        let mut delta = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            layer
                .activation
                .backprop(&cache.pre[i], &cache.post[i], &mut delta);
            let x = if i == 0 {
                &cache.input
            } else {
                &cache.post[i - 1]
            };
            let g = &mut grads.layers[i];
            for ((row, db), &d) in g
                .weights
                .chunks_exact_mut(layer.input)
                .zip(&mut g.bias)
                .zip(&delta)
            {
                *db += d;
                if d != 0.0 {
                    axpy(d, x, row);
                }
            }
            let mut prev = vec![0.0; layer.input];
            for (row, &d) in layer.weights.chunks_exact(layer.input).zip(&delta) {
                if d != 0.0 {
                    axpy(d, row, &mut prev);
                }
            }
            delta = prev;
        }
        d_input.copy_from_slice(&delta);
        Ok(())
    }
}

fn check_dims(dims: &[usize], activations: &[Activation]) -> Result<(), NetError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(NetError::EmptyDims);
    }
    if activations.len() != dims.len() - 1 {
        return Err(NetError::ActivationCount {
            expected: dims.len() - 1,
            got: activations.len(),
        });
    }
    Ok(())
}

/// Inputs, pre-activations and activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn for_params(p: &MlpParams) -> Self {
        ForwardCache {
            input: vec![0.0; p.input_dim()],
            pre: p.layers.iter().map(|l| vec![0.0; l.output]).collect(),
            post: p.layers.iter().map(|l| vec![0.0; l.output]).collect(),
        }
    }

    fn matches(&self, p: &MlpParams) -> bool {
        self.input.len() == p.input_dim()
            && self.pre.len() == p.layers.len()
            && self
                .pre
                .iter()
                .zip(&p.layers)
                .all(|(v, l)| v.len() == l.output)
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().map(|v| &v[..]).unwrap_or(&[])
    }
}

/// Gradient of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer gradients congruent with an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(p: &MlpParams) -> Self {
        GradientSet {
            layers: p
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, p: &MlpParams) -> bool {
        self.layers.len() == p.layers.len()
            && self
                .layers
                .iter()
                .zip(&p.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Same flat ordering as [`MlpParams::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|&v| v == 0.0))
    }
}

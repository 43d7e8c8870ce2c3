//! Fully connected networks with a linear output layer.
//!
//! Weights are stored row-major with shape `(out, in)`. Batched inputs and
//! outputs are flat row-major buffers of shape `(batch, width)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::{gemm, Real, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    #[inline]
    fn slope_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f64> {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArchitecture(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self.weights.iter().map(|w| U::real(w.as_f64())).collect(),
            bias: self.bias.iter().map(|b| U::real(b.as_f64())).collect(),
        }
    }
}

/// Parameters of a multilayer perceptron. Hidden layers apply their
/// activation, the final layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T = f64> {
    layers: Vec<Dense<T>>,
    activations: Vec<Activation>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T = f64> {
    pub layers: Vec<Dense<T>>,
}

/// Saved layer outputs from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    batch: usize,
    input: Vec<T>,
    /// Output of every layer; the last entry is the network output.
    outputs: Vec<Vec<T>>,
}

impl<T> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

pub(crate) fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least an input and an output width, got {widths:?}"
        )));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::InvalidArchitecture(format!(
            "all widths must be positive, got {widths:?}"
        )));
    }
    Ok(())
}

/// Glorot (Xavier) normal initialization with zero biases and tanh hidden layers.
pub fn glorot_init<T: Real, R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<MlpParams<T>> {
    MlpParams::glorot(widths, Activation::Tanh, rng)
}

/// Evaluates a single input vector.
pub fn mlp_forward<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<Vec<T>> {
    params.forward(x)
}

/// Gradient of `upstream . output` with respect to the parameters and the input.
pub fn mlp_grad<T: Real>(params: &MlpParams<T>, x: &[T], upstream: &[T]) -> Result<(MlpGrads<T>, Vec<T>)> {
    let trace = params.forward_trace(x, 1)?;
    params.backward(&trace, upstream)
}

impl<T: Real> MlpParams<T> {
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        validate_widths(widths)?;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut layer = Dense::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = T::real(normal.sample(rng));
            }
            layers.push(layer);
        }
        let activations = vec![activation; layers.len() - 1];
        Ok(Self {
            layers,
            activations,
        })
    }

    /// Builds a network from explicit layers; `activations` covers the hidden layers.
    pub fn from_layers(layers: Vec<Dense<T>>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("network has no layers".into()));
        }
        if activations.len() + 1 != layers.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} layers need {} hidden activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self {
            layers,
            activations,
        })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        validate_widths(widths)?;
        let layers: Vec<_> = widths.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect();
        let activations = vec![activation; layers.len() - 1];
        Ok(Self {
            layers,
            activations,
        })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in storage order: per layer, weights then biases.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self.layers.iter().map(Dense::cast).collect(),
            activations: self.activations.clone(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.activations == other.activations
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_batch(x, 1)?)
    }

    /// Evaluates `batch` row-major inputs at once.
    pub fn forward_batch(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let mut current = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            current = self.apply_layer(l, layer, &current, batch);
        }
        Ok(current)
    }

    /// Forward pass that keeps every layer output for [`MlpParams::backward`].
    pub fn forward_trace(&self, x: &[T], batch: usize) -> Result<ForwardTrace<T>> {
        self.check_input(x, batch)?;
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = if l == 0 { x } else { &outputs[l - 1] };
            let out = self.apply_layer(l, layer, prev, batch);
            outputs.push(out);
        }
        Ok(ForwardTrace {
            batch,
            input: x.to_vec(),
            outputs,
        })
    }

    /// Reverse accumulation of `sum(upstream * output)` through a saved trace.
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, trace: &ForwardTrace<T>, upstream: &[T]) -> Result<(MlpGrads<T>, Vec<T>)> {
        let batch = trace.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream has {} values, expected {batch}x{}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l + 1 < self.layers.len() {
                let act = self.activations[l];
                for (d, &a) in delta.iter_mut().zip(&trace.outputs[l]) {
                    *d = *d * act.slope_from_output(a);
                }
            }
            let prev: &[T] = if l == 0 { &trace.input } else { &trace.outputs[l - 1] };
            let mut g = Dense::zeros(layer.in_dim, layer.out_dim);
            // dW = delta^T * prev
            gemm(
                View::row_major(&delta, batch, layer.out_dim, layer.out_dim).t(),
                View::row_major(prev, batch, layer.in_dim, layer.in_dim),
                T::zero(),
                &mut g.weights,
                layer.in_dim,
            );
            for row in delta.chunks_exact(layer.out_dim) {
                for (gb, &d) in g.bias.iter_mut().zip(row) {
                    *gb = *gb + d;
                }
            }
            // delta_prev = delta * W
            let mut next = vec![T::zero(); batch * layer.in_dim];
            gemm(
                View::row_major(&delta, batch, layer.out_dim, layer.out_dim),
                View::row_major(&layer.weights, layer.out_dim, layer.in_dim, layer.in_dim),
                T::zero(),
                &mut next,
                layer.in_dim,
            );
            delta = next;
            grads.push(g);
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if x.len() != batch * self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, expected {batch}x{}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn apply_layer(&self, l: usize, layer: &Dense<T>, x: &[T], batch: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(batch * layer.out_dim);
        for _ in 0..batch {
            out.extend_from_slice(&layer.bias);
        }
        gemm(
            View::row_major(x, batch, layer.in_dim, layer.in_dim),
            View::row_major(&layer.weights, layer.out_dim, layer.in_dim, layer.in_dim).t(),
            T::one(),
            &mut out,
            layer.out_dim,
        );
        if l + 1 < self.layers.len() {
            let act = self.activations[l];
            for v in &mut out {
                *v = act.apply(*v);
            }
        }
        out
    }
}

impl<T: Real> MlpGrads<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn cast<U: Real>(&self) -> MlpGrads<U> {
        MlpGrads {
            layers: self.layers.iter().map(Dense::cast).collect(),
        }
    }

    pub fn matches(&self, params: &MlpParams<T>) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.in_dim == p.in_dim && g.out_dim == p.out_dim)
    }

    /// Location of the first non-finite entry, as `layer.field[index]`.
    pub fn first_non_finite(&self) -> Option<String> {
        for (l, layer) in self.layers.iter().enumerate() {
            if let Some(i) = layer.weights.iter().position(|v| !v.is_finite()) {
                return Some(format!("layer{l}.weights[{i}]"));
            }
            if let Some(i) = layer.bias.iter().position(|v| !v.is_finite()) {
                return Some(format!("layer{l}.bias[{i}]"));
            }
        }
        None
    }
}

//! Minimal multilayer perceptron with hand-written backpropagation and Adam.
//!
//! Parameters live in one flat vector. For every layer the weights come
//! first, row-major with shape `(output_dim, input_dim)`, followed by the
//! biases. Keeping a single vector makes genome copies and parameter-space
//! distances trivial.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(z),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// `tanh` through one `exp` call; libm's version dominated profiles.
#[inline]
fn tanh(z: f64) -> f64 {
    let a = z.abs();
    if a < 0.02 {
        return z.tanh();
    }
    let e = (-2.0 * a).exp();
    ((1.0 - e) / (1.0 + e)).copysign(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self { input_dim, output_dim, activation }
    }

    fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// Checks that the specs are non-empty, positive, and chain dimensionally.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Dimension("a network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Dimension(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Dimension(format!(
                "layer {i} outputs {} values but layer {} expects {}",
                pair[0].output_dim,
                i + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Per-layer activations of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input batch, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// Aligned with [`Network::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to each input row.
    pub input: Matrix,
}

impl Network {
    /// Wraps an explicit parameter vector.
    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        validate_specs(&layers)?;
        let expected: usize = layers.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { layers, params })
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_specs(&layers)?;
        let n = layers.iter().map(LayerSpec::param_count).sum();
        Ok(Self { layers, params: vec![0.0; n] })
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = seed::rng_from(seed);
        Self::init_with_rng(layers, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        let mut offset = 0;
        for spec in net.layers.clone() {
            let bound = 1.0 / (spec.input_dim as f64).sqrt();
            let n_w = spec.input_dim * spec.output_dim;
            for w in &mut net.params[offset..offset + n_w] {
                *w = rng.random_range(-bound..=bound);
            }
            offset += spec.param_count();
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Copy of the parameter vector in storage order.
    pub fn flatten_params(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.layers == other.layers
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&batch)?.into_vec())
    }

    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut current = inputs.clone();
        let mut offset = 0;
        for spec in &self.layers {
            current = self.layer_forward(spec, offset, &current);
            offset += spec.param_count();
        }
        if !current.is_finite() {
            return Err(Error::NonFinite("forward pass"));
        }
        Ok(current)
    }

    pub fn forward_trace(&self, inputs: &Matrix) -> Result<Trace> {
        self.check_input(inputs)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.clone());
        let mut offset = 0;
        for spec in &self.layers {
            let next = self.layer_forward(spec, offset, activations.last().unwrap());
            activations.push(next);
            offset += spec.param_count();
        }
        if !activations.last().unwrap().is_finite() {
            return Err(Error::NonFinite("forward pass"));
        }
        Ok(Trace { activations })
    }

    /// Gradient of `output_grad · f(input)` with respect to the parameters.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let trace = self.forward_trace(&batch)?;
        let og = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
        Ok(self.backward_batch(&trace, &og)?.params)
    }

    /// Backpropagates `output_grad` (one row per sample) through a recorded
    /// forward pass. Parameter gradients are summed over the batch.
    pub fn backward_batch(&self, trace: &Trace, output_grad: &Matrix) -> Result<Gradients> {
        let out = trace.output();
        if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
            return Err(Error::Dimension(format!(
                "output gradient is {}x{}, network output is {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let batch = out.rows();
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = output_grad.clone();
        let mut offset_end = self.params.len();

        for (l, spec) in self.layers.iter().enumerate().rev() {
            let offset = offset_end - spec.param_count();
            let (n_in, n_out) = (spec.input_dim, spec.output_dim);
            let y = &trace.activations[l + 1];
            let x = &trace.activations[l];
            for b in 0..batch {
                let d = delta.row_mut(b);
                for (dv, &yv) in d.iter_mut().zip(y.row(b)) {
                    *dv *= spec.activation.derivative_from_output(yv);
                }
            }
            let w = &self.params[offset..offset + n_in * n_out];
            let (gw, gb) = grads[offset..offset_end].split_at_mut(n_in * n_out);
            let mut prev = Matrix::zeros(batch, n_in);
            for b in 0..batch {
                let d = delta.row(b);
                let xb = x.row(b);
                let pb = prev.row_mut(b);
                for o in 0..n_out {
                    let dv = d[o];
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    let wrow = &w[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, &xv) in grow.iter_mut().zip(xb) {
                        *g += dv * xv;
                    }
                    for (p, &wv) in pb.iter_mut().zip(wrow) {
                        *p += dv * wv;
                    }
                }
            }
            delta = prev;
            offset_end = offset;
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("backward pass"));
        }
        Ok(Gradients { params: grads, input: delta })
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                inputs.cols()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, spec: &LayerSpec, offset: usize, x: &Matrix) -> Matrix {
        let (n_in, n_out) = (spec.input_dim, spec.output_dim);
        let w = &self.params[offset..offset + n_in * n_out];
        let bias = &self.params[offset + n_in * n_out..offset + spec.param_count()];
        // input-major copy of the weights turns the inner loop into a contiguous axpy
        let mut wt = vec![0.0; n_in * n_out];
        for o in 0..n_out {
            for i in 0..n_in {
                wt[i * n_out + o] = w[o * n_in + i];
            }
        }
        let mut out = Matrix::zeros(x.rows(), n_out);
        for b in 0..x.rows() {
            let ob = out.row_mut(b);
            ob.copy_from_slice(bias);
            for (&xv, wrow) in x.row(b).iter().zip(wt.chunks_exact(n_out)) {
                for (o, &wv) in ob.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
            for o in ob.iter_mut() {
                *o = spec.activation.apply(*o);
            }
        }
        out
    }
}

/// Euclidean distance between two parameter vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `net` descending along `grads`.
    pub fn step(&mut self, net: &mut Network, grads: &[f64], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
        }
        if grads.len() != net.params.len() || self.m.len() != net.params.len() {
            return Err(Error::Dimension(format!(
                "{} gradients / {} moments for {} parameters",
                grads.len(),
                self.m.len(),
                net.params.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        for (((p, &g), m), v) in net.params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(net: &mut Network, grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(net, grads, lr)
}

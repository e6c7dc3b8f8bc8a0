//! Small dense-network toolkit with hand-written reverse-mode gradients.
//!
//! Everything is batched: activations are `(batch, features)` matrices and a
//! layer computes `act(X W^T + b)`.

mod adam;
mod features;

pub use adam::{adam_step, lr_at, OptimizerState};
pub use features::{periodic_features, PeriodicFeatures};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Tanh,
    Identity,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `z * sigmoid(z)`.
pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Swish => swish(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation, given `z` and `a = apply(z)`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(z);
                s + a * (1.0 - s)
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `(out, in)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((outputs, inputs), || rng.gen_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(outputs, || rng.gen_range(-bound..bound));
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Returns `(pre_activation, activation)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        let act = self.activation;
        let a = z.mapv(|v| act.apply(v));
        (z, a)
    }
}

/// Feed-forward stack; optional side inputs are appended to the output of
/// layer `side_after` before it feeds the next layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub side_after: Option<usize>,
    pub side_width: usize,
}

/// Intermediates kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input seen by each layer (after any side concatenation).
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("cache holds at least one layer")
    }

    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, |a| a.nrows())
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    /// Flatten in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Result of [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: MlpGrads,
    pub input_grad: Array2<f64>,
    pub side_grad: Option<Array2<f64>>,
}

impl Mlp {
    /// Build from `(inputs, outputs, activation)` triples.
    pub fn new(layers: Vec<DenseLayer>, side_after: Option<usize>, side_width: usize) -> Result<Self> {
        let net = Self {
            layers,
            side_after,
            side_width,
        };
        net.check_dims()?;
        Ok(net)
    }

    fn check_dims(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            let extra = if self.side_after == Some(k) { self.side_width } else { 0 };
            if pair[0].outputs() + extra != pair[1].inputs() {
                return Err(Error::Config(format!(
                    "layer {k} emits {} (+{extra} side) values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        if let Some(k) = self.side_after {
            if k + 1 >= self.layers.len() {
                return Err(Error::Config("side inputs must feed a later layer".into()));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::n_params).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = flat[at];
                at += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[at];
                at += 1;
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<f64>, side: Option<ArrayView2<f64>>) -> Result<ForwardCache> {
        if input.ncols() != self.input_width() {
            return Err(Error::Config(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_width()
            )));
        }
        match (self.side_after, side) {
            (Some(_), Some(s)) if s.ncols() == self.side_width && s.nrows() == input.nrows() => {}
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "side inputs do not match the network's side configuration".into(),
                ))
            }
        }
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let (z, a) = layer.forward(x.view());
            cache.inputs.push(x);
            cache.pre.push(z);
            x = match (self.side_after, side) {
                (Some(at), Some(s)) if at == k => concatenate![Axis(1), a.view(), s],
                _ => a.clone(),
            };
            cache.post.push(a);
        }
        Ok(cache)
    }

    /// Reverse-mode pass for `dL/d(output) = output_grad`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Backward> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.pre.len() != n || cache.post.len() != n {
            return Err(Error::Usage(
                "backward called without a matching forward cache".into(),
            ));
        }
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::Usage(format!(
                "output gradient shape {:?} does not match forward output {:?}",
                output_grad.dim(),
                cache.output().dim()
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut side_grad = None;
        let mut upstream = output_grad.to_owned();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if self.side_after == Some(k) {
                let width = layer.outputs();
                side_grad = Some(upstream.slice(s![.., width..]).to_owned());
                upstream = upstream.slice(s![.., ..width]).to_owned();
            }
            let act = layer.activation;
            let mut dz = upstream;
            ndarray::Zip::from(&mut dz)
                .and(&cache.pre[k])
                .and(&cache.post[k])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            grads.weights[k] = dz.t().dot(&cache.inputs[k]);
            grads.bias[k] = dz.sum_axis(Axis(0));
            upstream = dz.dot(&layer.weights);
        }
        Ok(Backward {
            grads,
            input_grad: upstream,
            side_grad,
        })
    }
}

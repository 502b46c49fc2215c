//! Minimal dense neural-network engine.
//!
//! Models are small feed-forward classifiers built from dense layers, a
//! single pointwise activation (ReLU or softplus) and identity-skip residual
//! blocks. Everything the attack and game layers need is here: pre-softmax
//! logits, reverse-mode input gradients for an arbitrary function of the
//! logits, parameter gradients for training, and finite-difference Hessian
//! probes.

mod data;
mod hessian;
mod io;
mod loss;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{Dataset, DatasetKind, DatasetSpec, Sample};
pub use hessian::{
    full_hessian, full_hessian_with, hessian_probe, hessian_probe_with, FD_HESSIAN_STEP,
};
pub use io::{
    load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC,
};
pub use loss::{
    input_gradient, loss, loss_and_gradient, loss_and_logit_gradient, margin, LossKind,
};
pub use train::{accuracy, train, TrainConfig, TrainStats};

/// Pointwise nonlinearity shared by every activation layer of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    /// Derivative at exactly zero is taken to be 0.
    Relu,
    /// `ln(1 + exp(beta * z)) / beta`
    Softplus { beta: f64 },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Softplus {
            beta: Self::DEFAULT_SOFTPLUS_BETA,
        }
    }
}

impl Activation {
    pub const DEFAULT_SOFTPLUS_BETA: f64 = 10.0;

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softplus { .. } => "softplus",
        }
    }

    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus { beta } => {
                let t = beta * z;
                if t > 0.0 {
                    z + (-t).exp().ln_1p() / beta
                } else {
                    t.exp().ln_1p() / beta
                }
            }
        }
    }

    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { beta } => {
                let t = beta * z;
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored row-major as
/// `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::InvalidModel(format!(
                "dense {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
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

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn backward(&self, input: &[f64], grad_out: &[f64], grads: Option<&mut DenseGrad>) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (row, g) in self.weights.chunks_exact(self.in_dim).zip(grad_out) {
            if *g == 0.0 {
                continue;
            }
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += w * g;
            }
        }
        if let Some(acc) = grads {
            for (i, g) in grad_out.iter().enumerate() {
                acc.bias[i] += g;
                let row = &mut acc.weights[i * self.in_dim..(i + 1) * self.in_dim];
                for (w, v) in row.iter_mut().zip(input) {
                    *w += g * v;
                }
            }
        }
        grad_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    /// Applies the model's activation pointwise.
    Activation,
    /// `y = x + f(x)` where `f` is the wrapped stack; `f` must preserve width.
    Residual(Vec<Layer>),
}

/// Layer stack description used to initialise models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Dense layers of the given hidden widths, activation after each.
    Mlp { hidden: Vec<usize> },
    /// Input projection to `width`, then `blocks` residual blocks of
    /// `dense-act-dense` each followed by the activation, then the head.
    ResidualMlp { width: usize, blocks: usize },
}

impl Architecture {
    pub fn describe(&self) -> String {
        match self {
            Architecture::Mlp { hidden } => {
                let widths: Vec<String> = hidden.iter().map(|w| w.to_string()).collect();
                format!("mlp[{}]", widths.join("-"))
            }
            Architecture::ResidualMlp { width, blocks } => format!("resmlp[{width}x{blocks}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_dim: usize,
    num_classes: usize,
    activation: Activation,
    layers: Vec<Layer>,
}

/// Per-dense-layer parameter gradients, in depth-first layer order.
#[derive(Debug, Clone)]
pub(crate) struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

enum Cache {
    Dense(Vec<f64>),
    Activation(Vec<f64>),
    Residual(Vec<Cache>),
}

impl Model {
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        activation: Activation,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidModel(
                "input_dim and num_classes must be positive".into(),
            ));
        }
        if let Activation::Softplus { beta } = activation {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "softplus beta must be positive, got {beta}"
                )));
            }
        }
        let out = check_dims(&layers, input_dim)?;
        if out != num_classes {
            return Err(Error::InvalidModel(format!(
                "network produces {out} outputs but num_classes is {num_classes}"
            )));
        }
        Ok(Self {
            input_dim,
            num_classes,
            activation,
            layers,
        })
    }

    /// Seeded He-style initialisation of `arch`. Biases start at zero and
    /// the second dense layer inside each residual block is scaled down so
    /// that blocks start close to the identity.
    pub fn init(
        arch: &Architecture,
        input_dim: usize,
        num_classes: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = |i: usize, o: usize, scale: f64| -> Layer {
            let std = scale * (2.0 / i as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let weights = (0..i * o).map(|_| normal.sample(&mut rng)).collect();
            Layer::Dense(Dense {
                in_dim: i,
                out_dim: o,
                weights,
                bias: vec![0.0; o],
            })
        };
        let mut layers = Vec::new();
        match arch {
            Architecture::Mlp { hidden } => {
                let mut prev = input_dim;
                for &w in hidden {
                    layers.push(dense(prev, w, 1.0));
                    layers.push(Layer::Activation);
                    prev = w;
                }
                layers.push(dense(prev, num_classes, 1.0));
            }
            Architecture::ResidualMlp { width, blocks } => {
                layers.push(dense(input_dim, *width, 1.0));
                layers.push(Layer::Activation);
                for _ in 0..*blocks {
                    let inner = vec![
                        dense(*width, *width, 1.0),
                        Layer::Activation,
                        dense(*width, *width, 0.5),
                    ];
                    layers.push(Layer::Residual(inner));
                    layers.push(Layer::Activation);
                }
                layers.push(dense(*width, num_classes, 1.0));
            }
        }
        Self::new(input_dim, num_classes, activation, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape {
                expected: vec![self.input_dim],
                actual: vec![x.len()],
            });
        }
        Ok(())
    }

    pub(crate) fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::Label {
                label: y,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Pre-softmax logits.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits(x))
    }

    /// Logits without the shape check; callers guarantee `x.len() == input_dim`.
    pub(crate) fn logits(&self, x: &[f64]) -> Vec<f64> {
        run_plain(&self.layers, self.activation, x.to_vec())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Evaluates `head(logits) -> (value, d value / d logits)` and returns
    /// the value together with its gradient with respect to the input.
    pub fn value_and_input_gradient<F>(&self, x: &[f64], head: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        self.check_input(x)?;
        Ok(self.value_and_input_gradient_unchecked(x, head))
    }

    pub(crate) fn value_and_input_gradient_unchecked<F>(
        &self,
        x: &[f64],
        head: F,
    ) -> (f64, Vec<f64>)
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = run_cached(&self.layers, self.activation, x.to_vec(), &mut caches);
        let (value, cotangent) = head(&logits);
        let mut cursor = 0;
        let grad = run_backward(
            &self.layers,
            self.activation,
            &caches,
            cotangent,
            None,
            &mut cursor,
        );
        (value, grad)
    }

    pub(crate) fn zero_grads(&self) -> Vec<DenseGrad> {
        let mut out = Vec::new();
        visit_dense(&self.layers, &mut |d| {
            out.push(DenseGrad {
                weights: vec![0.0; d.weights.len()],
                bias: vec![0.0; d.bias.len()],
            })
        });
        out
    }

    /// Accumulates parameter gradients of `head` into `grads` and returns the
    /// head value.
    pub(crate) fn accumulate_param_grads<F>(
        &self,
        x: &[f64],
        head: F,
        grads: &mut [DenseGrad],
    ) -> f64
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = run_cached(&self.layers, self.activation, x.to_vec(), &mut caches);
        let (value, cotangent) = head(&logits);
        let mut cursor = grads.len();
        run_backward(
            &self.layers,
            self.activation,
            &caches,
            cotangent,
            Some(grads),
            &mut cursor,
        );
        value
    }

    pub(crate) fn dense_layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out = Vec::new();
        collect_dense_mut(&mut self.layers, &mut out);
        out
    }

    pub fn dense_layers(&self) -> Vec<&Dense> {
        let mut out = Vec::new();
        visit_dense(&self.layers, &mut |d| out.push(d));
        out
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn check_dims(layers: &[Layer], mut dim: usize) -> Result<usize> {
    for layer in layers {
        match layer {
            Layer::Dense(d) => {
                if d.in_dim != dim {
                    return Err(Error::InvalidModel(format!(
                        "dense layer expects {} inputs but receives {dim}",
                        d.in_dim
                    )));
                }
                if d.weights.len() != d.in_dim * d.out_dim || d.bias.len() != d.out_dim {
                    return Err(Error::InvalidModel(
                        "dense parameter length mismatch".into(),
                    ));
                }
                dim = d.out_dim;
            }
            Layer::Activation => {}
            Layer::Residual(inner) => {
                let out = check_dims(inner, dim)?;
                if out != dim {
                    return Err(Error::InvalidModel(format!(
                        "residual block maps {dim} to {out}; the skip needs equal widths"
                    )));
                }
            }
        }
    }
    Ok(dim)
}

fn visit_dense<'a>(layers: &'a [Layer], f: &mut impl FnMut(&'a Dense)) {
    for layer in layers {
        match layer {
            Layer::Dense(d) => f(d),
            Layer::Activation => {}
            Layer::Residual(inner) => visit_dense(inner, f),
        }
    }
}

fn collect_dense_mut<'a>(layers: &'a mut [Layer], out: &mut Vec<&'a mut Dense>) {
    for layer in layers {
        match layer {
            Layer::Dense(d) => out.push(d),
            Layer::Activation => {}
            Layer::Residual(inner) => collect_dense_mut(inner, out),
        }
    }
}

fn run_plain(layers: &[Layer], act: Activation, mut x: Vec<f64>) -> Vec<f64> {
    for layer in layers {
        x = match layer {
            Layer::Dense(d) => d.forward(&x),
            Layer::Activation => {
                x.iter_mut().for_each(|v| *v = act.apply(*v));
                x
            }
            Layer::Residual(inner) => {
                let fx = run_plain(inner, act, x.clone());
                x.iter().zip(fx).map(|(a, b)| a + b).collect()
            }
        };
    }
    x
}

fn run_cached(
    layers: &[Layer],
    act: Activation,
    mut x: Vec<f64>,
    caches: &mut Vec<Cache>,
) -> Vec<f64> {
    for layer in layers {
        x = match layer {
            Layer::Dense(d) => {
                let y = d.forward(&x);
                caches.push(Cache::Dense(x));
                y
            }
            Layer::Activation => {
                let y = x.iter().map(|v| act.apply(*v)).collect();
                caches.push(Cache::Activation(x));
                y
            }
            Layer::Residual(inner) => {
                let mut inner_caches = Vec::with_capacity(inner.len());
                let fx = run_cached(inner, act, x.clone(), &mut inner_caches);
                caches.push(Cache::Residual(inner_caches));
                x.iter().zip(fx).map(|(a, b)| a + b).collect()
            }
        };
    }
    x
}

/// Reverse pass. Dense layers are met in reverse depth-first order, so
/// `cursor` counts down through the gradient slots when `grads` is given.
fn run_backward(
    layers: &[Layer],
    act: Activation,
    caches: &[Cache],
    mut grad: Vec<f64>,
    mut grads: Option<&mut [DenseGrad]>,
    cursor: &mut usize,
) -> Vec<f64> {
    for (layer, cache) in layers.iter().zip(caches).rev() {
        grad = match (layer, cache) {
            (Layer::Dense(d), Cache::Dense(input)) => {
                let slot = match grads.as_deref_mut() {
                    Some(g) => {
                        *cursor -= 1;
                        Some(&mut g[*cursor])
                    }
                    None => None,
                };
                d.backward(input, &grad, slot)
            }
            (Layer::Activation, Cache::Activation(pre)) => grad
                .iter()
                .zip(pre)
                .map(|(g, z)| g * act.derivative(*z))
                .collect(),
            (Layer::Residual(inner), Cache::Residual(inner_caches)) => {
                let through = run_backward(
                    inner,
                    act,
                    inner_caches,
                    grad.clone(),
                    grads.as_deref_mut(),
                    cursor,
                );
                grad.iter().zip(through).map(|(a, b)| a + b).collect()
            }
            _ => unreachable!("cache layout follows the layer layout"),
        };
    }
    grad
}

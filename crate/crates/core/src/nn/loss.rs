use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::Result;

/// Classification loss `l(h(x), y)` on pre-softmax logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// `max_{y' != y} h_{y'} - h_y`; identical to the coalition utility of
    /// the fully perturbed input.
    Margin,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Margin => "margin",
        }
    }
}

/// Margin `max_{y' != y} z_{y'} - z_y` and the index of the runner-up class.
/// Ties resolve to the lowest index.
pub fn margin(logits: &[f64], y: usize) -> (f64, usize) {
    let mut best = usize::MAX;
    for (k, z) in logits.iter().enumerate() {
        if k != y && (best == usize::MAX || *z > logits[best]) {
            best = k;
        }
    }
    (logits[best] - logits[y], best)
}

/// Loss value and its gradient with respect to the logits. `y` must be a
/// valid class index.
pub fn loss_and_logit_gradient(logits: &[f64], y: usize, kind: LossKind) -> (f64, Vec<f64>) {
    match kind {
        LossKind::CrossEntropy => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let lse = max + sum.ln();
            let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
            grad[y] -= 1.0;
            (lse - logits[y], grad)
        }
        LossKind::Margin => {
            let (value, runner_up) = margin(logits, y);
            let mut grad = vec![0.0; logits.len()];
            grad[runner_up] = 1.0;
            grad[y] = -1.0;
            (value, grad)
        }
    }
}

pub fn loss(model: &Model, x: &[f64], y: usize, kind: LossKind) -> Result<f64> {
    model.check_label(y)?;
    let logits = model.forward(x)?;
    Ok(loss_and_logit_gradient(&logits, y, kind).0)
}

/// Reverse-mode gradient of the loss with respect to the input.
pub fn input_gradient(model: &Model, x: &[f64], y: usize, kind: LossKind) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(model, x, y, kind)?.1)
}

pub fn loss_and_gradient(
    model: &Model,
    x: &[f64],
    y: usize,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    model.check_label(y)?;
    model.value_and_input_gradient(x, |logits| loss_and_logit_gradient(logits, y, kind))
}

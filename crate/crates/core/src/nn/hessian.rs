//! Second-order probes by central differences of the input gradient.

use super::{input_gradient, Activation, LossKind, Model};
use crate::error::{Error, Result};

/// Step used for differencing the gradient. Softplus with beta = 10 bends
/// on a scale of about 0.1 input units, well above this.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

/// `H_ab = d^2 l / dx_a dx_b` for each requested pair, from central
/// differences of the reverse-mode gradient along `x_b`.
pub fn hessian_probe(
    model: &Model,
    x: &[f64],
    y: usize,
    kind: LossKind,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    require_smooth(model)?;
    model.check_input(x)?;
    model.check_label(y)?;
    check_pairs(pairs, x.len())?;
    Ok(hessian_probe_with(
        |z| input_gradient(model, z, y, kind).expect("input validated"),
        x,
        pairs,
        FD_HESSIAN_STEP,
    ))
}

/// Same probe for any gradient oracle.
pub fn hessian_probe_with<G>(grad: G, x: &[f64], pairs: &[(usize, usize)], h: f64) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut columns: Vec<Option<Vec<f64>>> = vec![None; x.len()];
    let mut probe = x.to_vec();
    pairs
        .iter()
        .map(|&(a, b)| {
            let col = columns[b].get_or_insert_with(|| difference_column(&grad, &mut probe, b, h));
            col[a]
        })
        .collect()
}

/// Full `n x n` Hessian, row-major.
pub fn full_hessian(model: &Model, x: &[f64], y: usize, kind: LossKind) -> Result<Vec<f64>> {
    require_smooth(model)?;
    model.check_input(x)?;
    model.check_label(y)?;
    Ok(full_hessian_with(
        |z| input_gradient(model, z, y, kind).expect("input validated"),
        x,
        FD_HESSIAN_STEP,
    ))
}

pub fn full_hessian_with<G>(grad: G, x: &[f64], h: f64) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut probe = x.to_vec();
    let mut out = vec![0.0; n * n];
    for b in 0..n {
        let col = difference_column(&grad, &mut probe, b, h);
        for a in 0..n {
            out[a * n + b] = col[a];
        }
    }
    out
}

fn difference_column<G>(grad: &G, probe: &mut [f64], b: usize, h: f64) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let orig = probe[b];
    probe[b] = orig + h;
    let up = grad(probe);
    probe[b] = orig - h;
    let down = grad(probe);
    probe[b] = orig;
    up.iter()
        .zip(&down)
        .map(|(u, d)| (u - d) / (2.0 * h))
        .collect()
}

fn require_smooth(model: &Model) -> Result<()> {
    match model.activation() {
        Activation::Softplus { .. } => Ok(()),
        Activation::Relu => Err(Error::UnsupportedActivation("relu")),
    }
}

fn check_pairs(pairs: &[(usize, usize)], n: usize) -> Result<()> {
    for &(a, b) in pairs {
        if a >= n || b >= n {
            return Err(Error::Shape {
                expected: vec![n],
                actual: vec![a.max(b) + 1],
            });
        }
    }
    Ok(())
}

use super::{Coalition, Game, Partition};
use crate::error::{Error, Result};
use crate::nn::{margin, Model};

/// Attack-utility game on a model: `v(S) = max_{y' != y} h_{y'}(x + delta^(S))
/// - h_y(x + delta^(S))`.
#[derive(Debug, Clone, Copy)]
pub struct CoalitionGame<'a> {
    model: &'a Model,
    x: &'a [f64],
    delta: &'a [f64],
    partition: &'a Partition,
    label: usize,
}

impl<'a> CoalitionGame<'a> {
    pub fn new(
        model: &'a Model,
        x: &'a [f64],
        delta: &'a [f64],
        partition: &'a Partition,
        label: usize,
    ) -> Result<Self> {
        model.check_input(x)?;
        model.check_label(label)?;
        if delta.len() != x.len() {
            return Err(Error::Shape {
                expected: vec![x.len()],
                actual: vec![delta.len()],
            });
        }
        if partition.num_pixels() != x.len() {
            return Err(Error::Partition(format!(
                "partition covers {} pixels, input has {}",
                partition.num_pixels(),
                x.len()
            )));
        }
        Ok(Self {
            model,
            x,
            delta,
            partition,
            label,
        })
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }

    pub fn input(&self) -> &'a [f64] {
        self.x
    }

    pub fn delta(&self) -> &'a [f64] {
        self.delta
    }

    pub fn partition(&self) -> &'a Partition {
        self.partition
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// `x + delta^(S)`.
    pub fn perturbed_input(&self, coalition: &Coalition) -> Vec<f64> {
        let mut out = self.x.to_vec();
        for k in coalition.members() {
            for &p in self.partition.cell(k) {
                out[p] += self.delta[p];
            }
        }
        out
    }

    /// `v(S)` together with its gradient with respect to `delta`. Pixels
    /// outside `S` get zero gradient.
    pub fn value_and_delta_gradient(&self, coalition: &Coalition) -> (f64, Vec<f64>) {
        let input = self.perturbed_input(coalition);
        let label = self.label;
        let (value, grad_x) = self
            .model
            .value_and_input_gradient_unchecked(&input, |logits| {
                let (m, runner_up) = margin(logits, label);
                let mut cot = vec![0.0; logits.len()];
                cot[runner_up] = 1.0;
                cot[label] = -1.0;
                (m, cot)
            });
        let mut grad = vec![0.0; grad_x.len()];
        for k in coalition.members() {
            for &p in self.partition.cell(k) {
                grad[p] = grad_x[p];
            }
        }
        (value, grad)
    }
}

impl Game for CoalitionGame<'_> {
    fn num_players(&self) -> usize {
        self.partition.num_cells()
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        let logits = self.model.logits(&self.perturbed_input(coalition));
        margin(&logits, self.label).0
    }
}

/// `v(S) = g . delta^(S) + 1/2 delta^(S)^T H delta^(S)` for a symmetric `H`
/// (row-major `n x n`). Its pair interactions are exactly
/// `sum_{a in A, b in B} delta_a H_ab delta_b`.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    gradient: Vec<f64>,
    hessian: Vec<f64>,
    delta: Vec<f64>,
    partition: Partition,
}

impl QuadraticGame {
    pub fn new(
        gradient: Vec<f64>,
        hessian: Vec<f64>,
        delta: Vec<f64>,
        partition: Partition,
    ) -> Result<Self> {
        let n = gradient.len();
        if hessian.len() != n * n || delta.len() != n || partition.num_pixels() != n {
            return Err(Error::Shape {
                expected: vec![n, n],
                actual: vec![hessian.len(), delta.len()],
            });
        }
        Ok(Self {
            gradient,
            hessian,
            delta,
            partition,
        })
    }

    pub fn hessian(&self, a: usize, b: usize) -> f64 {
        self.hessian[a * self.gradient.len() + b]
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// `sum_{a in cell i, b in cell j} delta_a H_ab delta_b`.
    pub fn analytic_interaction(&self, i: usize, j: usize) -> f64 {
        let mut total = 0.0;
        for &a in self.partition.cell(i) {
            for &b in self.partition.cell(j) {
                total += self.delta[a] * self.hessian(a, b) * self.delta[b];
            }
        }
        total
    }
}

impl Game for QuadraticGame {
    fn num_players(&self) -> usize {
        self.partition.num_cells()
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        let n = self.gradient.len();
        let mut d = vec![0.0; n];
        for k in coalition.members() {
            for &p in self.partition.cell(k) {
                d[p] = self.delta[p];
            }
        }
        let linear: f64 = self.gradient.iter().zip(&d).map(|(g, v)| g * v).sum();
        let mut quad = 0.0;
        for a in 0..n {
            if d[a] == 0.0 {
                continue;
            }
            let row = &self.hessian[a * n..(a + 1) * n];
            quad += d[a] * row.iter().zip(&d).map(|(h, v)| h * v).sum::<f64>();
        }
        linear + 0.5 * quad
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GridPartition, SamplingPlan};
use crate::nn::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "2")]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Single,
    Pgd,
    Mi,
    Vr,
    Ir,
    Opt,
    InteractionOnly,
    Noise,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Pgd => "pgd",
            Method::Mi => "mi",
            Method::Vr => "vr",
            Method::Ir => "ir",
            Method::Opt => "opt",
            Method::InteractionOnly => "interaction-only",
            Method::Noise => "noise",
        }
    }
}

/// Momentum accumulator for the MI attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentumMode {
    /// Running average `g_t = mu g_{t-1} + (1 - mu) grad`, `mu = (t-1)/t`.
    Schedule,
    /// Original form `g_t = mu g_{t-1} + grad / |grad|_1`.
    Fixed { mu: f64 },
}

/// How an ascent direction becomes a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `alpha * sign(g)` under L-inf, `alpha * g / |g|_2` under L2.
    Steepest,
    /// `alpha * g`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub method: Method,
    pub norm: Norm,
    pub epsilon: f64,
    pub step_size: f64,
    pub steps: usize,
    pub loss: LossKind,
    pub update: UpdateRule,
    pub lambda: f64,
    pub momentum: MomentumMode,
    pub vr_sigma: f64,
    pub vr_samples: usize,
    pub c: f64,
    pub p_relax: f64,
    pub tau: f64,
    pub max_opt_steps: usize,
    /// Grid cells per side for the interaction loss.
    pub grid: usize,
    /// `[height, width]`; a square raster is assumed when absent.
    pub raster: Option<[usize; 2]>,
    pub sampling: SamplingPlan,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: Method::Pgd,
            norm: Norm::Inf,
            epsilon: 16.0 / 255.0,
            step_size: 2.0 / 255.0,
            steps: 100,
            loss: LossKind::CrossEntropy,
            update: UpdateRule::Steepest,
            lambda: 0.0,
            momentum: MomentumMode::Schedule,
            vr_sigma: 0.05,
            vr_samples: 16,
            c: 0.1,
            p_relax: 2.0,
            tau: 1.0,
            max_opt_steps: 1000,
            grid: 16,
            raster: None,
            sampling: SamplingPlan::default(),
            seed: 0,
        }
    }
}

impl AttackConfig {
    /// Defaults with an L2 budget of `16 sqrt(n) / 255`.
    pub fn default_l2(n: usize) -> Self {
        Self {
            norm: Norm::L2,
            epsilon: 16.0 * (n as f64).sqrt() / 255.0,
            ..Self::default()
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Grid over the input raster used by the interaction loss.
    pub fn grid_partition(&self, n: usize) -> Result<GridPartition> {
        let [h, w] = match self.raster {
            Some(r) => r,
            None => {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::Config(format!(
                        "input of {n} pixels is not square; set raster"
                    )));
                }
                [side, side]
            }
        };
        if h * w != n {
            return Err(Error::Config(format!(
                "raster {h}x{w} does not match {n} inputs"
            )));
        }
        GridPartition::new(h, w, self.grid).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field the configured method uses against an input of
    /// `n` pixels.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!(
                "step_size must be positive, got {}",
                self.step_size
            ));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        match self.method {
            Method::Mi => {
                if let MomentumMode::Fixed { mu } = self.momentum {
                    if !(mu >= 0.0 && mu.is_finite()) {
                        return bad(format!("momentum mu must be non-negative, got {mu}"));
                    }
                }
            }
            Method::Vr => {
                if self.vr_samples == 0 {
                    return bad("vr_samples must be at least 1".into());
                }
                if !(self.vr_sigma > 0.0 && self.vr_sigma.is_finite()) {
                    return bad(format!("vr_sigma must be positive, got {}", self.vr_sigma));
                }
            }
            Method::Opt => {
                if !(self.c >= 0.0 && self.c.is_finite()) {
                    return bad(format!("c must be non-negative, got {}", self.c));
                }
                if !(self.p_relax >= 1.0 && self.p_relax.is_finite()) {
                    return bad(format!("p_relax must be at least 1, got {}", self.p_relax));
                }
                if !(self.tau > 0.0 && self.tau.is_finite()) {
                    return bad(format!("tau must be positive, got {}", self.tau));
                }
                if self.max_opt_steps == 0 {
                    return bad("max_opt_steps must be at least 1".into());
                }
            }
            Method::Ir | Method::InteractionOnly => {
                if self.method == Method::InteractionOnly && self.lambda <= 0.0 {
                    return bad("interaction-only attack needs lambda > 0".into());
                }
                let grid = self.grid_partition(n)?;
                self.sampling
                    .validate(grid.partition().num_cells())
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            Method::Single | Method::Pgd | Method::Noise => {}
        }
        Ok(())
    }
}

//! Perturbation generators. Every attack starts from the clean input, keeps
//! `|delta|_p <= epsilon` and `x + delta` inside `[0, 1]`, and records an
//! [`AttackTrace`].

mod config;
mod interaction;
mod trace;

pub use config::{AttackConfig, Method, MomentumMode, Norm, UpdateRule};
pub use interaction::interaction_objective;
pub use trace::{AttackTrace, TRACE_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::game::draw_batches;
use crate::nn::{input_gradient, loss, Model};
use crate::tensor::{norm2, rescale_to_norm2};

const VR_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Amplitude of the random start of the interaction-only attack, whose
/// objective is stationary at zero.
pub const INTERACTION_ONLY_INIT: f64 = 1e-3;

/// Norm-ball projection: per-coordinate clamp under L-inf, rescaling onto the
/// sphere under L2 when outside the ball.
pub fn project(delta: &[f64], norm: Norm, epsilon: f64) -> Vec<f64> {
    match norm {
        Norm::Inf => delta.iter().map(|d| d.clamp(-epsilon, epsilon)).collect(),
        Norm::L2 => {
            let n = norm2(delta);
            if n > epsilon {
                let s = epsilon / n;
                delta.iter().map(|d| d * s).collect()
            } else {
                delta.to_vec()
            }
        }
    }
}

/// Clamps `x + delta` into `[0, 1]` and returns the resulting perturbation.
pub fn clamp_box(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(delta)
        .map(|(a, d)| (a + d).clamp(0.0, 1.0) - a)
        .collect()
}

/// [`project`] followed by [`clamp_box`].
pub fn project_feasible(x: &[f64], delta: &[f64], norm: Norm, epsilon: f64) -> Vec<f64> {
    clamp_box(x, &project(delta, norm, epsilon))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Turns an ascent direction into a step of size `alpha`. A zero direction
/// gives a zero step under L2 normalisation.
pub fn step_vector(direction: &[f64], norm: Norm, rule: UpdateRule, alpha: f64) -> Vec<f64> {
    match (rule, norm) {
        (UpdateRule::Raw, _) => direction.iter().map(|g| alpha * g).collect(),
        (UpdateRule::Steepest, Norm::Inf) => direction.iter().map(|&g| alpha * sign(g)).collect(),
        (UpdateRule::Steepest, Norm::L2) => {
            let n = norm2(direction);
            if n == 0.0 {
                vec![0.0; direction.len()]
            } else {
                direction.iter().map(|g| alpha * g / n).collect()
            }
        }
    }
}

/// One momentum update at step `t >= 1`.
pub fn momentum_update(acc: &mut [f64], grad: &[f64], t: usize, mode: MomentumMode) {
    match mode {
        MomentumMode::Schedule => {
            let mu = (t - 1) as f64 / t as f64;
            for (a, g) in acc.iter_mut().zip(grad) {
                *a = mu * *a + (1.0 - mu) * g;
            }
        }
        MomentumMode::Fixed { mu } => {
            let l1: f64 = grad.iter().map(|g| g.abs()).sum();
            for (a, g) in acc.iter_mut().zip(grad) {
                *a = mu * *a + if l1 > 0.0 { g / l1 } else { 0.0 };
            }
        }
    }
}

/// Mean of `grad(point + xi)` over `samples` draws `xi ~ N(0, sigma^2 I)`.
pub fn smoothed_gradient<F>(
    grad: F,
    point: &[f64],
    sigma: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let normal = Normal::new(0.0, sigma).map_err(|e| crate::Error::Config(e.to_string()))?;
    let mut total = vec![0.0; point.len()];
    for _ in 0..samples {
        let noisy: Vec<f64> = point.iter().map(|p| p + normal.sample(rng)).collect();
        for (t, g) in total.iter_mut().zip(grad(&noisy)?) {
            *t += g;
        }
    }
    Ok(total.into_iter().map(|t| t / samples as f64).collect())
}

fn add(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter().zip(delta).map(|(a, b)| a + b).collect()
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Recorder {
    stride: usize,
    step_indices: Vec<usize>,
    deltas: Vec<Vec<f64>>,
    loss: Vec<f64>,
    interaction_loss: Vec<f64>,
}

impl Recorder {
    fn new(max_steps: usize) -> Self {
        Self {
            stride: trace::stride_for(max_steps),
            step_indices: Vec::new(),
            deltas: Vec::new(),
            loss: Vec::new(),
            interaction_loss: Vec::new(),
        }
    }

    fn record(
        &mut self,
        model: &Model,
        x: &[f64],
        y: usize,
        cfg: &AttackConfig,
        t: usize,
        delta: &[f64],
    ) -> Result<()> {
        self.loss.push(loss(model, &add(x, delta), y, cfg.loss)?);
        if t % self.stride == 0 {
            self.step_indices.push(t);
            self.deltas.push(delta.to_vec());
        }
        Ok(())
    }

    fn finish(
        mut self,
        model: &Model,
        x: &[f64],
        y: usize,
        cfg: &AttackConfig,
        method: Method,
        reached_max_steps: bool,
    ) -> Result<AttackTrace> {
        let final_delta = self.deltas.last().cloned().expect("final step is recorded");
        let success = model.predict(&add(x, &final_delta))? != y;
        self.deltas.shrink_to_fit();
        Ok(AttackTrace {
            method,
            loss_kind: cfg.loss,
            stride: self.stride,
            step_indices: self.step_indices,
            deltas: self.deltas,
            loss: self.loss,
            interaction_loss: self.interaction_loss,
            final_delta,
            success,
            reached_max_steps,
        })
    }

    /// Records `delta` as step `t` even when it falls between strides.
    fn record_final(
        &mut self,
        model: &Model,
        x: &[f64],
        y: usize,
        cfg: &AttackConfig,
        t: usize,
        delta: &[f64],
    ) -> Result<()> {
        self.record(model, x, y, cfg, t, delta)?;
        if self.step_indices.last() != Some(&t) {
            self.step_indices.push(t);
            self.deltas.push(delta.to_vec());
        }
        Ok(())
    }
}

fn prepare(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<()> {
    model.check_input(x)?;
    model.check_label(y)?;
    cfg.validate(x.len())
}

/// Shared multi-step loop: `direction(t, delta, recorder)` returns the
/// ascent direction at `delta = delta^{t-1}`.
fn ascend<F>(
    model: &Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
    method: Method,
    start: Vec<f64>,
    mut direction: F,
) -> Result<AttackTrace>
where
    F: FnMut(usize, &[f64], &mut Recorder) -> Result<Vec<f64>>,
{
    let mut rec = Recorder::new(cfg.steps);
    let mut delta = vec![0.0; x.len()];
    rec.record(model, x, y, cfg, 0, &delta)?;
    let mut current = start;
    for t in 1..=cfg.steps {
        let g = direction(t, &current, &mut rec)?;
        let step = step_vector(&g, cfg.norm, cfg.update, cfg.step_size);
        delta = project_feasible(x, &add(&current, &step), cfg.norm, cfg.epsilon);
        if t == cfg.steps {
            rec.record_final(model, x, y, cfg, t, &delta)?;
        } else {
            rec.record(model, x, y, cfg, t, &delta)?;
        }
        current = delta.clone();
    }
    rec.finish(model, x, y, cfg, method, false)
}

/// One gradient at the clean input, stepped with size `alpha * m`.
pub fn attack_single(
    model: &Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let g = input_gradient(model, x, y, cfg.loss)?;
    let step = step_vector(&g, cfg.norm, cfg.update, cfg.step_size * cfg.steps as f64);
    let delta = project_feasible(x, &step, cfg.norm, cfg.epsilon);
    let mut rec = Recorder::new(1);
    rec.record(model, x, y, cfg, 0, &vec![0.0; x.len()])?;
    rec.record_final(model, x, y, cfg, 1, &delta)?;
    rec.finish(model, x, y, cfg, Method::Single, false)
}

pub fn attack_pgd(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    ascend(
        model,
        x,
        y,
        cfg,
        Method::Pgd,
        vec![0.0; x.len()],
        |_, d, _| input_gradient(model, &add(x, d), y, cfg.loss),
    )
}

pub fn attack_mi(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let mut acc = vec![0.0; x.len()];
    ascend(
        model,
        x,
        y,
        cfg,
        Method::Mi,
        vec![0.0; x.len()],
        |t, d, _| {
            let g = input_gradient(model, &add(x, d), y, cfg.loss)?;
            momentum_update(&mut acc, &g, t, cfg.momentum);
            Ok(acc.clone())
        },
    )
}

pub fn attack_vr(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let mut rng = stream(cfg.seed, VR_STREAM);
    ascend(
        model,
        x,
        y,
        cfg,
        Method::Vr,
        vec![0.0; x.len()],
        |_, d, _| {
            smoothed_gradient(
                |p| input_gradient(model, p, y, cfg.loss),
                &add(x, d),
                cfg.vr_sigma,
                cfg.vr_samples,
                &mut rng,
            )
        },
    )
}

/// Ascends `loss - lambda * interaction`, with fresh batches every step.
/// With `lambda == 0` the iterates coincide with [`attack_pgd`]; the
/// interaction loss is still recorded.
pub fn attack_ir(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let grid = cfg.grid_partition(x.len())?;
    let part = grid.partition();
    let mut rng = stream(cfg.sampling.seed, cfg.seed);
    ascend(
        model,
        x,
        y,
        cfg,
        Method::Ir,
        vec![0.0; x.len()],
        |_, d, rec| {
            let mut g = input_gradient(model, &add(x, d), y, cfg.loss)?;
            let batches = draw_batches(
                &mut rng,
                cfg.sampling.k,
                cfg.sampling.batchsize,
                part.num_cells(),
            );
            let (value, gi) = interaction_objective(model, x, y, d, part, &batches)?;
            rec.interaction_loss.push(value);
            if cfg.lambda != 0.0 {
                for (a, b) in g.iter_mut().zip(&gi) {
                    *a -= cfg.lambda * b;
                }
            }
            Ok(g)
        },
    )
}

/// Descends the interaction loss alone, from a small seeded random start.
/// `deltas[0]` is still the zero perturbation.
pub fn attack_interaction_only(
    model: &Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let grid = cfg.grid_partition(x.len())?;
    let part = grid.partition();
    let mut init_rng = stream(cfg.seed, INIT_STREAM);
    let start: Vec<f64> = (0..x.len())
        .map(|_| INTERACTION_ONLY_INIT * init_rng.random_range(-1.0..1.0))
        .collect();
    let start = project_feasible(x, &start, cfg.norm, cfg.epsilon);
    let mut rng = stream(cfg.sampling.seed, cfg.seed);
    ascend(
        model,
        x,
        y,
        cfg,
        Method::InteractionOnly,
        start,
        |_, d, rec| {
            let batches = draw_batches(
                &mut rng,
                cfg.sampling.k,
                cfg.sampling.batchsize,
                part.num_cells(),
            );
            let (value, gi) = interaction_objective(model, x, y, d, part, &batches)?;
            rec.interaction_loss.push(value);
            Ok(gi.into_iter().map(|g| -cfg.lambda * g).collect())
        },
    )
}

/// Gradient descent on `-loss + c |delta|_p^p` with step `alpha`, stopping
/// once `|delta|_2 >= tau`; an overshooting final step is scaled back onto
/// `|delta|_2 = tau`.
pub fn attack_opt(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let mut rec = Recorder::new(cfg.max_opt_steps);
    let mut delta = vec![0.0; x.len()];
    rec.record(model, x, y, cfg, 0, &delta)?;
    let p = cfg.p_relax;
    for t in 1..=cfg.max_opt_steps {
        let g = input_gradient(model, &add(x, &delta), y, cfg.loss)?;
        let moved: Vec<f64> = delta
            .iter()
            .zip(&g)
            .map(|(&d, &gl)| {
                let penalty = cfg.c * p * d.abs().powf(p - 1.0) * sign(d);
                d + cfg.step_size * (gl - penalty)
            })
            .collect();
        delta = clamp_box(x, &moved);
        if norm2(&delta) >= cfg.tau {
            delta = rescale_to_norm2(&delta, cfg.tau);
            rec.record_final(model, x, y, cfg, t, &delta)?;
            return rec.finish(model, x, y, cfg, Method::Opt, false);
        }
        if t == cfg.max_opt_steps {
            rec.record_final(model, x, y, cfg, t, &delta)?;
        } else {
            rec.record(model, x, y, cfg, t, &delta)?;
        }
    }
    rec.finish(model, x, y, cfg, Method::Opt, true)
}

/// `epsilon * sign(xi)` with `xi` standard normal, projected and
/// box-clamped.
pub fn noise_baseline(x: &[f64], cfg: &AttackConfig) -> Vec<f64> {
    let mut rng = stream(cfg.seed, NOISE_STREAM);
    let raw: Vec<f64> = (0..x.len())
        .map(|_| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            if xi < 0.0 {
                -cfg.epsilon
            } else {
                cfg.epsilon
            }
        })
        .collect();
    project_feasible(x, &raw, cfg.norm, cfg.epsilon)
}

fn attack_noise(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    prepare(model, x, y, cfg)?;
    let mut rec = Recorder::new(1);
    rec.record(model, x, y, cfg, 0, &vec![0.0; x.len()])?;
    rec.record_final(model, x, y, cfg, 1, &noise_baseline(x, cfg))?;
    rec.finish(model, x, y, cfg, Method::Noise, false)
}

/// Runs the attack selected by `cfg.method`.
pub fn run_attack(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<AttackTrace> {
    match cfg.method {
        Method::Single => attack_single(model, x, y, cfg),
        Method::Pgd => attack_pgd(model, x, y, cfg),
        Method::Mi => attack_mi(model, x, y, cfg),
        Method::Vr => attack_vr(model, x, y, cfg),
        Method::Ir => attack_ir(model, x, y, cfg),
        Method::Opt => attack_opt(model, x, y, cfg),
        Method::InteractionOnly => attack_interaction_only(model, x, y, cfg),
        Method::Noise => attack_noise(model, x, y, cfg),
    }
}

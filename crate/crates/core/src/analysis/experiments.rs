use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{
    bootstrap_mean_ci, mean, median, pearson, verdict, Correlation, Direction, Histogram, Interval,
    Verdict,
};
use super::toy::NamedModel;
use super::transfer::{loo_transferability, success_matrix, transfer_utility};
use crate::attacks::{
    attack_interaction_only, attack_ir, attack_mi, attack_opt, attack_pgd, attack_single,
    attack_vr, noise_baseline, AttackConfig, AttackTrace, Method,
};
use crate::error::{Error, Result};
use crate::game::{
    mean_interaction_eq4, neighbor_interactions, CoalitionGame, GridPartition, PairEstimator,
};
use crate::nn::{full_hessian, input_gradient, LossKind, Model, Sample};
use crate::tensor::{norm2, rescale_to_norm2};

/// Closed-form average interaction of `delta` over the cells of `grid` on
/// `model` (normalised by `1/(P-1)`).
pub fn grid_interaction(
    model: &Model,
    x: &[f64],
    y: usize,
    delta: &[f64],
    grid: &GridPartition,
) -> Result<f64> {
    let game = CoalitionGame::new(model, x, delta, grid.partition(), y)?;
    Ok(mean_interaction_eq4(&game)?.mean_interaction)
}

/// `delta` rescaled to the L2 norm of `reference`.
pub fn magnitude_match(delta: &[f64], reference: &[f64]) -> Vec<f64> {
    rescale_to_norm2(delta, norm2(reference))
}

/// One attack per example, run in parallel and returned in example order.
pub fn attack_all(
    model: &Model,
    samples: &[Sample],
    cfg: &AttackConfig,
    attack: fn(&Model, &[f64], usize, &AttackConfig) -> Result<AttackTrace>,
) -> Result<Vec<AttackTrace>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let cfg = AttackConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                ..cfg.clone()
            };
            attack(model, &s.x, s.label, &cfg)
        })
        .collect()
}

fn interactions_of(
    model: &Model,
    samples: &[Sample],
    deltas: &[Vec<f64>],
    grid: &GridPartition,
) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .zip(deltas)
        .map(|(s, d)| grid_interaction(model, &s.x, s.label, d, grid))
        .collect()
}

/// `tau` as the median L2 norm of final PGD perturbations on `samples`.
pub fn pilot_tau(model: &Model, samples: &[Sample], cfg: &AttackConfig) -> Result<f64> {
    let traces = attack_all(model, samples, &cfg.with_method(Method::Pgd), attack_pgd)?;
    let norms: Vec<f64> = traces.iter().map(|t| norm2(&t.final_delta)).collect();
    Ok(median(&norms))
}

/// Penalty weights of the default correlation sweep.
pub const DEFAULT_C_VALUES: [f64; 6] = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0];
/// Penalty exponents of the default correlation sweep.
pub const DEFAULT_P_VALUES: [f64; 2] = [2.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub target_id: String,
    pub c: f64,
    pub p_relax: f64,
    pub mean_interaction: f64,
    pub mean_transfer_utility: f64,
    pub examples: usize,
    /// Runs that hit the step cap before reaching `tau`.
    pub capped_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCorrelation {
    pub target_id: String,
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSweep {
    pub source_id: String,
    pub tau: f64,
    pub points: Vec<CorrelationPoint>,
    pub correlations: Vec<TargetCorrelation>,
}

/// Relaxed attacks over a `(c, p_relax)` grid, each stopped at
/// `|delta|_2 = tau` (runs that hit the step cap are rescaled onto `tau`
/// before measuring); per target, the Pearson correlation between mean
/// source interaction and mean transfer utility across sweep points.
pub fn correlation_sweep(
    source: &NamedModel,
    targets: &[NamedModel],
    samples: &[Sample],
    c_values: &[f64],
    p_values: &[f64],
    tau: f64,
    base: &AttackConfig,
    grid: &GridPartition,
) -> Result<CorrelationSweep> {
    let combos: Vec<(f64, f64)> = p_values
        .iter()
        .flat_map(|&p| c_values.iter().map(move |&c| (c, p)))
        .collect();
    if combos.len() < 3 {
        return Err(Error::Analysis(format!(
            "a sweep needs at least 3 points, got {}",
            combos.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut points = Vec::new();
    for &(c, p) in &combos {
        let cfg = AttackConfig {
            method: Method::Opt,
            c,
            p_relax: p,
            tau,
            ..base.clone()
        };
        let traces = attack_all(&source.model, samples, &cfg, attack_opt)?;
        let deltas: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| match norm2(&t.final_delta) {
                n if n > 0.0 => rescale_to_norm2(&t.final_delta, tau),
                _ => t.final_delta.clone(),
            })
            .collect();
        let capped = traces.iter().filter(|t| t.reached_max_steps).count();
        let interaction = mean(&interactions_of(&source.model, samples, &deltas, grid)?);
        for target in targets {
            let utilities = samples
                .iter()
                .zip(&deltas)
                .map(|(s, d)| transfer_utility(&target.model, &s.x, s.label, d))
                .collect::<Result<Vec<_>>>()?;
            points.push(CorrelationPoint {
                target_id: target.id.clone(),
                c,
                p_relax: p,
                mean_interaction: interaction,
                mean_transfer_utility: mean(&utilities),
                examples: samples.len(),
                capped_runs: capped,
            });
        }
    }
    let correlations = targets
        .iter()
        .map(|t| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|p| p.target_id == t.id)
                .map(|p| (p.mean_interaction, p.mean_transfer_utility))
                .unzip();
            TargetCorrelation {
                target_id: t.id.clone(),
                correlation: pearson(&xs, &ys),
            }
        })
        .collect();
    Ok(CorrelationSweep {
        source_id: source.id.clone(),
        tau,
        points,
        correlations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub target_id: String,
    pub loo_success_rate: f64,
    pub final_success_rate: f64,
    pub mean_interaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub source_id: String,
    pub rows: Vec<LambdaRow>,
}

impl LambdaSweep {
    pub fn row(&self, lambda: f64, target_id: &str) -> Option<&LambdaRow> {
        self.rows
            .iter()
            .find(|r| r.lambda == lambda && r.target_id == target_id)
    }
}

/// IR attacks for every `lambda`; per target, the leave-one-out success
/// rate over the recorded steps, plus the mean source interaction of the
/// final perturbations.
pub fn lambda_sweep(
    source: &NamedModel,
    targets: &[NamedModel],
    samples: &[Sample],
    lambdas: &[f64],
    base: &AttackConfig,
    grid: &GridPartition,
) -> Result<LambdaSweep> {
    if !lambdas.contains(&0.0) {
        return Err(Error::Analysis(
            "the lambda sweep needs the lambda = 0 baseline".into(),
        ));
    }
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let cfg = AttackConfig {
            method: Method::Ir,
            lambda,
            ..base.clone()
        };
        let traces = attack_all(&source.model, samples, &cfg, attack_ir)?;
        let deltas: Vec<Vec<f64>> = traces.iter().map(|t| t.final_delta.clone()).collect();
        let interaction = mean(&interactions_of(&source.model, samples, &deltas, grid)?);
        for target in targets {
            let success = success_matrix(&target.model, samples, &traces)?;
            let (_, loo) = loo_transferability(&success)?;
            let last = success.iter().filter(|row| *row.last().unwrap()).count() as f64
                / success.len() as f64;
            rows.push(LambdaRow {
                lambda,
                target_id: target.id.clone(),
                loo_success_rate: loo,
                final_success_rate: last,
                mean_interaction: interaction,
            });
        }
    }
    Ok(LambdaSweep {
        source_id: source.id.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionOnlyTarget {
    pub target_id: String,
    /// Success rate at each recorded step.
    pub success_by_epoch: Vec<f64>,
    pub loo_transferability: f64,
    pub noise_success_rate: f64,
    /// Some step after the start fools the target at least as often as noise.
    pub beats_noise: bool,
}

impl InteractionOnlyTarget {
    /// Best success rate over the stored steps after the start.
    pub fn peak_success(&self) -> f64 {
        self.success_by_epoch
            .iter()
            .skip(1)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionOnlyCurve {
    pub source_id: String,
    pub epochs: Vec<usize>,
    pub targets: Vec<InteractionOnlyTarget>,
}

/// Interaction-only attacks on the source, evaluated on each target per
/// recorded step, with an `epsilon * sign(noise)` baseline row.
pub fn interaction_only_curve(
    source: &NamedModel,
    targets: &[NamedModel],
    samples: &[Sample],
    cfg: &AttackConfig,
) -> Result<InteractionOnlyCurve> {
    let cfg = cfg.with_method(Method::InteractionOnly);
    let traces = attack_all(&source.model, samples, &cfg, attack_interaction_only)?;
    let noise: Vec<Vec<f64>> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            noise_baseline(
                &s.x,
                &AttackConfig {
                    seed: cfg.seed.wrapping_add(k as u64),
                    ..cfg.clone()
                },
            )
        })
        .collect();
    let mut rows = Vec::new();
    for target in targets {
        let success = success_matrix(&target.model, samples, &traces)?;
        let steps = success[0].len();
        let by_epoch = (0..steps)
            .map(|t| success.iter().filter(|row| row[t]).count() as f64 / samples.len() as f64)
            .collect();
        let (_, loo) = loo_transferability(&success)?;
        let mut fooled = 0;
        for (s, d) in samples.iter().zip(&noise) {
            let xd: Vec<f64> = s.x.iter().zip(d).map(|(a, b)| a + b).collect();
            fooled += usize::from(target.model.predict(&xd)? != s.label);
        }
        let mut row = InteractionOnlyTarget {
            target_id: target.id.clone(),
            success_by_epoch: by_epoch,
            loo_transferability: loo,
            noise_success_rate: fooled as f64 / samples.len() as f64,
            beats_noise: false,
        };
        row.beats_noise = row.peak_success() >= row.noise_success_rate;
        rows.push(row);
    }
    Ok(InteractionOnlyCurve {
        source_id: source.id.clone(),
        epochs: traces[0].step_indices.clone(),
        targets: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionConfig {
    /// Multi-step attack settings shared by every compared method.
    pub attack: AttackConfig,
    pub grid: usize,
    pub bootstrap_resamples: usize,
    pub hessian_examples: usize,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for PropositionConfig {
    fn default() -> Self {
        Self {
            attack: AttackConfig {
                loss: LossKind::Margin,
                ..AttackConfig::default()
            },
            grid: 16,
            bootstrap_resamples: 2000,
            hessian_examples: 2,
            histogram_bins: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub expected: Direction,
    pub pairs: usize,
    pub interval: Interval,
    pub verdict: Verdict,
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub loss: LossKind,
    pub comparisons: Vec<Comparison>,
    /// Off-diagonal Hessian entries of the loss in the input.
    pub hessian: Histogram,
    /// `g_b H_bb / sum_a g_a H_ab` per input coordinate `b`.
    pub ratio: Histogram,
}

impl PropositionReport {
    pub fn comparison(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.name == name)
    }
}

struct PairInteractions {
    multi: f64,
    single: f64,
    noise: f64,
    vr: f64,
    mi: f64,
}

/// Paired interaction comparisons on every `(model, example)` pair: multi
/// step against single step and against sign noise (both rescaled to the
/// multi-step L2 norm), and VR and revised MI against multi step (rescaled
/// likewise). Also collects Hessian histograms on the first few pairs.
pub fn proposition_suite(
    models: &[&Model],
    samples: &[Sample],
    cfg: &PropositionConfig,
) -> Result<PropositionReport> {
    if models.is_empty() || samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..samples.len()).map(move |s| (m, s)))
        .collect();
    let measured = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(m, s))| {
            let model = models[m];
            let sample = &samples[s];
            let grid = AttackConfig {
                grid: cfg.grid,
                ..cfg.attack.clone()
            }
            .grid_partition(sample.x.len())?;
            let attack = AttackConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                ..cfg.attack.clone()
            };
            let (x, y) = (&sample.x, sample.label);
            let multi = attack_pgd(model, x, y, &attack)?.final_delta;
            let single = attack_single(model, x, y, &attack)?.final_delta;
            let noise = noise_baseline(x, &attack);
            let vr = attack_vr(model, x, y, &attack)?.final_delta;
            let mi = attack_mi(model, x, y, &attack)?.final_delta;
            let measure = |d: &[f64]| grid_interaction(model, x, y, d, &grid);
            Ok(PairInteractions {
                multi: measure(&multi)?,
                single: measure(&magnitude_match(&single, &multi))?,
                noise: measure(&magnitude_match(&noise, &multi))?,
                vr: measure(&magnitude_match(&vr, &multi))?,
                mi: measure(&magnitude_match(&mi, &multi))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let compare =
        |name: &str, expected: Direction, f: &dyn Fn(&PairInteractions) -> f64, salt: u64| {
            let differences: Vec<f64> = measured.iter().map(f).collect();
            let interval =
                bootstrap_mean_ci(&differences, cfg.bootstrap_resamples, 0.95, cfg.seed ^ salt);
            Comparison {
                name: name.into(),
                expected,
                pairs: differences.len(),
                verdict: verdict(&interval, expected),
                interval,
                differences,
            }
        };
    let comparisons = vec![
        compare(
            "multi-vs-single",
            Direction::Positive,
            &|p| p.multi - p.single,
            1,
        ),
        compare(
            "multi-vs-noise",
            Direction::Positive,
            &|p| p.multi - p.noise,
            2,
        ),
        compare("vr-vs-multi", Direction::Negative, &|p| p.vr - p.multi, 3),
        compare("mi-vs-multi", Direction::Negative, &|p| p.mi - p.multi, 4),
    ];

    let (hessian, ratio) = hessian_statistics(models, samples, cfg)?;
    Ok(PropositionReport {
        loss: cfg.attack.loss,
        comparisons,
        hessian,
        ratio,
    })
}

fn hessian_statistics(
    models: &[&Model],
    samples: &[Sample],
    cfg: &PropositionConfig,
) -> Result<(Histogram, Histogram)> {
    let mut entries = Vec::new();
    let mut ratios = Vec::new();
    let count = cfg.hessian_examples.min(samples.len());
    for model in models {
        for s in &samples[..count] {
            let n = s.x.len();
            let h = full_hessian(model, &s.x, s.label, cfg.attack.loss)?;
            let g = input_gradient(model, &s.x, s.label, cfg.attack.loss)?;
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        entries.push(h[a * n + b]);
                    }
                }
            }
            for b in 0..n {
                let col: f64 = (0..n).map(|a| g[a] * h[a * n + b]).sum();
                if col != 0.0 {
                    ratios.push(g[b] * h[b * n + b] / col);
                }
            }
        }
    }
    Ok((
        Histogram::new(&entries, cfg.histogram_bins),
        Histogram::new(&ratios, cfg.histogram_bins),
    ))
}

/// Leading term `alpha^3 (m-1) m^2 E_{a != b}[U_ab]` of the multi-step minus
/// single-step interaction gap for a loss with gradient `g` and Hessian `h`
/// (row-major), where `U_ab = g_a H_ab sum_a' H_a'b g_a'`.
pub fn multi_single_leading_term(g: &[f64], h: &[f64], alpha: f64, m: usize) -> f64 {
    let n = g.len();
    let hg: Vec<f64> = (0..n)
        .map(|b| (0..n).map(|a| h[a * n + b] * g[a]).sum())
        .collect();
    let mut total = 0.0;
    for b in 0..n {
        for a in 0..n {
            if a != b {
                total += g[a] * h[a * n + b] * hg[b];
            }
        }
    }
    let m = m as f64;
    alpha.powi(3) * (m - 1.0) * m * m * total / (n * (n - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Mean interaction of each grid cell with its 4-adjacent cells.
pub fn neighbor_heatmap(
    model: &Model,
    x: &[f64],
    y: usize,
    delta: &[f64],
    grid: &GridPartition,
    estimator: PairEstimator,
) -> Result<Vec<HeatCell>> {
    let game = CoalitionGame::new(model, x, delta, grid.partition(), y)?;
    let values = neighbor_interactions(&game, grid, estimator)?;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, value)| {
            let (row, col) = grid.coords(k);
            HeatCell { row, col, value }
        })
        .collect())
}

//! Oracle battery: Shapley axioms, the closed-form average interaction, the
//! two interaction definitions, the quadratic interaction identity and
//! gradient checks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::interaction_objective;
use crate::error::{Error, Result};
use crate::game::{
    interaction_alt_exact, interaction_exact, mean_interaction_eq4, mean_interaction_pairwise,
    sample_batches, shapley_exact_weighted, shapley_weight, Coalition, CoalitionGame, Game,
    Partition, QuadraticGame, SamplingPlan, TableGame,
};
use crate::nn::{full_hessian, input_gradient, loss, Activation, Architecture, LossKind, Model};
use crate::numdiff::{central_difference, max_relative_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ShapleyAxioms,
    Eq4,
    AppendixD,
    Lemma1,
    Gradcheck,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::ShapleyAxioms,
        Suite::Eq4,
        Suite::AppendixD,
        Suite::Lemma1,
        Suite::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ShapleyAxioms => "shapley-axioms",
            Suite::Eq4 => "eq4",
            Suite::AppendixD => "appendix-d",
            Suite::Lemma1 => "lemma1",
            Suite::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown suite {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// One property inside a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, errors: &[f64], tolerance: f64) -> Self {
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        Self {
            name: name.into(),
            cases: errors.len(),
            max_error,
            tolerance,
            passed: errors.iter().all(|e| e.is_finite()) && max_error < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Knobs of the battery. `shapley_weight` is the coalition weight used by
/// the axiom suite, replaceable to confirm that a wrong weight is caught.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub cases: usize,
    pub shapley_weight: fn(usize, usize) -> f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 100,
            shapley_weight,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    match suite {
        Suite::ShapleyAxioms => shapley_axioms(opts),
        Suite::Eq4 => eq4(opts),
        Suite::AppendixD => appendix_d(opts),
        Suite::Lemma1 => lemma1(opts),
        Suite::Gradcheck => gradcheck(opts),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    Suite::ALL.iter().map(|&s| run_suite(s, opts)).collect()
}

fn rng_for(opts: &VerifyOptions, suite: Suite) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(suite as u64);
    rng
}

fn random_game(rng: &mut impl Rng, players: usize) -> TableGame {
    let values = (0..1usize << players)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    TableGame::new(players, values).expect("table size matches")
}

fn shapley_values(game: &TableGame, weight: fn(usize, usize) -> f64) -> Result<Vec<f64>> {
    (0..game.num_players())
        .map(|i| shapley_exact_weighted(game, i, &weight))
        .collect()
}

fn shapley_axioms(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts, Suite::ShapleyAxioms);
    let w = opts.shapley_weight;
    let (mut lin, mut dummy, mut sym, mut eff) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for case in 0..opts.cases {
        let p = 2 + case % 7;
        let u = random_game(&mut rng, p);
        let v = random_game(&mut rng, p);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mixed = TableGame::from_fn(p, |s| {
            a * u.value_of_mask(s.mask()) + b * v.value_of_mask(s.mask())
        })?;
        let (pu, pv, pm) = (
            shapley_values(&u, w)?,
            shapley_values(&v, w)?,
            shapley_values(&mixed, w)?,
        );
        lin.push(
            (0..p)
                .map(|i| (pm[i] - a * pu[i] - b * pv[i]).abs())
                .fold(0.0, f64::max),
        );

        let total: f64 = pu.iter().sum();
        let full = u.value_of_mask((1u64 << p) - 1) - u.value_of_mask(0);
        eff.push((total - full).abs());

        let d = rng.random_range(0..p);
        let gain = rng.random_range(-1.0..1.0);
        let with_dummy = TableGame::from_fn(p, |s| {
            let mut rest = s.clone();
            rest.remove(d);
            u.value_of_mask(rest.mask()) + if s.contains(d) { gain } else { 0.0 }
        })?;
        dummy.push((shapley_exact_weighted(&with_dummy, d, &w)? - gain).abs());

        let (i, j) = (0, p - 1);
        let swap = |s: &Coalition| {
            let mut t = s.clone();
            match (s.contains(i), s.contains(j)) {
                (true, false) => {
                    t.remove(i);
                    t.insert(j);
                }
                (false, true) => {
                    t.remove(j);
                    t.insert(i);
                }
                _ => {}
            }
            t
        };
        let symmetric = TableGame::from_fn(p, |s| {
            u.value_of_mask(s.mask()) + u.value_of_mask(swap(s).mask())
        })?;
        sym.push(
            (shapley_exact_weighted(&symmetric, i, &w)?
                - shapley_exact_weighted(&symmetric, j, &w)?)
            .abs(),
        );
    }
    Ok(SuiteReport::new(
        Suite::ShapleyAxioms,
        vec![
            Check::new("linearity", &lin, 1e-10),
            Check::new("dummy", &dummy, 1e-10),
            Check::new("symmetry", &sym, 1e-10),
            Check::new("efficiency", &eff, 1e-10),
        ],
    ))
}

fn eq4(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts, Suite::Eq4);
    let mut errors = Vec::new();
    for case in 0..opts.cases {
        let game = random_game(&mut rng, 4 + case % 9);
        let closed = mean_interaction_eq4(&game)?.mean_interaction;
        let brute = mean_interaction_pairwise(&game)?.mean_interaction;
        errors.push((closed - brute).abs());
    }
    Ok(SuiteReport::new(
        Suite::Eq4,
        vec![Check::new("closed-form-vs-pairwise", &errors, 1e-9)],
    ))
}

fn appendix_d(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts, Suite::AppendixD);
    let mut errors = Vec::new();
    for case in 0..opts.cases {
        let p = 2 + case % 7;
        let game = random_game(&mut rng, p);
        let i = rng.random_range(0..p);
        let j = (i + rng.random_range(1..p)) % p;
        errors.push((interaction_exact(&game, i, j)? - interaction_alt_exact(&game, i, j)?).abs());
    }
    Ok(SuiteReport::new(
        Suite::AppendixD,
        vec![Check::new("pair-vs-pinned", &errors, 1e-10)],
    ))
}

fn random_symmetric(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = rng.random_range(-1.0..1.0);
            h[a * n + b] = v;
            h[b * n + a] = v;
        }
    }
    h
}

fn lemma1(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts, Suite::Lemma1);
    let cases = opts.cases.clamp(1, 20);
    let mut quad = Vec::new();
    for _ in 0..cases {
        let n = rng.random_range(2..=7);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = random_symmetric(&mut rng, n);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let game = QuadraticGame::new(g, h.clone(), d.clone(), Partition::singletons(n))?;
        for a in 0..n {
            for b in a + 1..n {
                quad.push((interaction_exact(&game, a, b)? - d[a] * h[a * n + b] * d[b]).abs());
            }
        }
    }
    let mut model_dev = Vec::new();
    for case in 0..cases {
        let n = 6;
        let model = Model::init(
            &Architecture::Mlp { hidden: vec![10] },
            n,
            3,
            Activation::default(),
            opts.seed.wrapping_add(case as u64),
        )?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let d: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.5e-3..1e-3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let y = case % 3;
        let h = full_hessian(&model, &x, y, LossKind::Margin)?;
        let part = Partition::singletons(n);
        let game = CoalitionGame::new(&model, &x, &d, &part, y)?;
        let (mut diff, mut norm) = (0.0, 0.0);
        for a in 0..n {
            for b in a + 1..n {
                let want = d[a] * h[a * n + b] * d[b];
                diff += (interaction_exact(&game, a, b)? - want).powi(2);
                norm += want * want;
            }
        }
        model_dev.push((diff / norm).sqrt());
    }
    Ok(SuiteReport::new(
        Suite::Lemma1,
        vec![
            Check::new("quadratic-exact", &quad, 1e-10),
            Check::new("softplus-small-delta", &model_dev, 0.05),
        ],
    ))
}

fn check_model(seed: u64, residual: bool) -> Result<Model> {
    let arch = if residual {
        Architecture::ResidualMlp {
            width: 8,
            blocks: 1,
        }
    } else {
        Architecture::Mlp {
            hidden: vec![10, 6],
        }
    };
    Model::init(&arch, 16, 4, Activation::default(), seed)
}

fn gradcheck(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts, Suite::Gradcheck);
    let cases = opts.cases.clamp(20, 40);
    let h = 1e-5;
    let mut loss_err = Vec::new();
    let mut inter_err = Vec::new();
    for case in 0..cases {
        let model = check_model(opts.seed.wrapping_add(case as u64), case % 2 == 1)?;
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..0.9)).collect();
        let y = case % 4;
        for kind in [LossKind::CrossEntropy, LossKind::Margin] {
            let analytic = input_gradient(&model, &x, y, kind)?;
            let numeric =
                central_difference(|p| loss(&model, p, y, kind).expect("valid input"), &x, h);
            loss_err.push(max_relative_error(&analytic, &numeric));
        }
        let delta: Vec<f64> = (0..16).map(|_| rng.random_range(-0.1..0.1)).collect();
        let part = Partition::singletons(16);
        let plan = SamplingPlan {
            k: 4,
            batchsize: 4,
            seed: opts.seed.wrapping_add(case as u64),
        };
        let batches = sample_batches(&plan, 16)?;
        let (_, analytic) = interaction_objective(&model, &x, y, &delta, &part, &batches)?;
        let numeric = central_difference(
            |d| {
                interaction_objective(&model, &x, y, d, &part, &batches)
                    .expect("valid input")
                    .0
            },
            &delta,
            h,
        );
        inter_err.push(max_relative_error(&analytic, &numeric));
    }
    Ok(SuiteReport::new(
        Suite::Gradcheck,
        vec![
            Check::new("loss-gradient", &loss_err, 1e-4),
            Check::new("interaction-gradient", &inter_err, 1e-3),
        ],
    ))
}

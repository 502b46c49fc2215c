//! Average-interaction estimators that scale past subset enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{interaction_exact, tabulate, MAX_EXACT_PLAYERS};
use super::report::{Estimator, InteractionReport, SamplingPlan};
use super::{check_player, Coalition, Game, GridPartition};
use crate::error::{Error, Result};

/// Coalition samples per pair for the sampled pair interaction.
pub const DEFAULT_PAIR_SAMPLES: usize = 100;

/// Closed-form average interaction over all pairs,
/// `1/(P-1) * mean_i [v(all) - v(all - i) - v({i}) + v(none)]`, from
/// `2P + 2` utility evaluations. The mean is computed as
/// `(sum_i term_i / P) / (P - 1)`.
pub fn mean_interaction_eq4(game: &impl Game) -> Result<InteractionReport> {
    let players = game.num_players();
    if players < 2 {
        return Err(Error::TooFewPlayers(players));
    }
    let full = game.value(&Coalition::full(players));
    let empty = game.value(&Coalition::empty(players));
    let terms: Vec<f64> = (0..players)
        .into_par_iter()
        .map(|i| {
            let mut without = Coalition::full(players);
            without.remove(i);
            let alone = Coalition::from_players(players, &[i]);
            full - game.value(&without) - game.value(&alone) + empty
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / players as f64 / (players - 1) as f64;
    Ok(InteractionReport {
        mean_interaction: mean,
        per_player_terms: Some(terms),
        estimator: Estimator::ExactEq4,
        normalized: true,
        players,
        plan: None,
    })
}

/// Draws `plan.k` batches of `plan.batchsize` players by continuing a
/// seeded Fisher-Yates shuffle: consecutive batches are disjoint until the
/// players run out, then the shuffle restarts over all players. Every batch
/// is marginally a uniform `batchsize`-subset.
pub fn sample_batches(plan: &SamplingPlan, players: usize) -> Result<Vec<Vec<usize>>> {
    plan.validate(players)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    Ok(draw_batches(&mut rng, plan.k, plan.batchsize, players))
}

pub(crate) fn draw_batches(
    rng: &mut impl Rng,
    k: usize,
    batchsize: usize,
    players: usize,
) -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = (0..players).collect();
    let mut pos = 0;
    let mut batches = Vec::with_capacity(k);
    for _ in 0..k {
        if pos + batchsize > players {
            pos = 0;
        }
        for t in pos..pos + batchsize {
            let j = rng.random_range(t..players);
            pool.swap(t, j);
        }
        batches.push(pool[pos..pos + batchsize].to_vec());
        pos += batchsize;
    }
    batches
}

/// Monte-Carlo batch estimate
/// `1/K sum_k [v(all) - v(all - B_k) - v(B_k) + v(none)]`.
/// The `1/(P-1)` factor is not applied (`normalized == false`).
pub fn mean_interaction_sampled(
    game: &impl Game,
    plan: &SamplingPlan,
) -> Result<InteractionReport> {
    let players = game.num_players();
    let batches = sample_batches(plan, players)?;
    let full = game.value(&Coalition::full(players));
    let empty = game.value(&Coalition::empty(players));
    let terms: Vec<f64> = batches
        .par_iter()
        .map(|batch| {
            let inside = Coalition::from_players(players, batch);
            let outside = inside.complement();
            full - game.value(&outside) - game.value(&inside) + empty
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(InteractionReport {
        mean_interaction: mean,
        per_player_terms: None,
        estimator: Estimator::Sampled,
        normalized: false,
        players,
        plan: Some(*plan),
    })
}

/// How pair interactions are obtained for neighbour maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairEstimator {
    /// Subset enumeration; needs at most `MAX_EXACT_PLAYERS` players.
    Exact,
    /// Unbiased sampling of the closed sum: a coalition size uniform on
    /// `0..=P-2`, then a uniform coalition of that size.
    Sampled { samples: usize, seed: u64 },
}

impl Default for PairEstimator {
    fn default() -> Self {
        PairEstimator::Sampled {
            samples: DEFAULT_PAIR_SAMPLES,
            seed: 0,
        }
    }
}

fn draw_pair_coalitions(
    players: usize,
    i: usize,
    j: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Coalition> {
    let mut others: Vec<usize> = (0..players).filter(|&k| k != i && k != j).collect();
    (0..samples)
        .map(|_| {
            let size = rng.random_range(0..=others.len());
            for t in 0..size {
                let pick = rng.random_range(t..others.len());
                others.swap(t, pick);
            }
            Coalition::from_players(players, &others[..size])
        })
        .collect()
}

fn pair_delta(game: &impl Game, base: &Coalition, i: usize, j: usize) -> f64 {
    let mut s = base.clone();
    let v = game.value(&s);
    s.insert(i);
    let vi = game.value(&s);
    s.insert(j);
    let vij = game.value(&s);
    s.remove(i);
    let vj = game.value(&s);
    vij - vj - vi + v
}

/// Sampled estimate of `I_ij` with a seeded stream.
pub fn interaction_sampled(
    game: &impl Game,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_player(game, i)?;
    check_player(game, j)?;
    if i == j {
        return Err(Error::InvalidPair(i));
    }
    if samples == 0 {
        return Err(Error::Plan(
            "at least one coalition sample is needed".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampled_with_rng(game, i, j, samples, &mut rng))
}

fn sampled_with_rng(
    game: &impl Game,
    i: usize,
    j: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let coalitions = draw_pair_coalitions(game.num_players(), lo, hi, samples, rng);
    let deltas: Vec<f64> = coalitions
        .par_iter()
        .map(|s| pair_delta(game, s, lo, hi))
        .collect();
    deltas.iter().sum::<f64>() / samples as f64
}

/// For each grid cell, the mean interaction with its 4-adjacent cells.
/// Result is indexed like the grid cells (`p * L + q`).
pub fn neighbor_interactions(
    game: &impl Game,
    grid: &GridPartition,
    estimator: PairEstimator,
) -> Result<Vec<f64>> {
    let players = game.num_players();
    if players != grid.l * grid.l {
        return Err(Error::Partition(format!(
            "game has {players} players, grid has {} cells",
            grid.l * grid.l
        )));
    }
    if players < 2 {
        return Ok(vec![0.0; players]);
    }
    let pairs: Vec<(usize, usize)> = (0..players)
        .flat_map(|a| {
            grid.neighbors(a)
                .into_iter()
                .filter(move |&b| b > a)
                .map(move |b| (a, b))
        })
        .collect();
    let values: Vec<f64> = match estimator {
        PairEstimator::Exact => {
            if players > MAX_EXACT_PLAYERS {
                return Err(Error::Capacity {
                    players,
                    limit: MAX_EXACT_PLAYERS,
                });
            }
            let table = tabulate(game)?;
            pairs
                .iter()
                .map(|&(a, b)| interaction_exact(&table, a, b))
                .collect::<Result<_>>()?
        }
        PairEstimator::Sampled { samples, seed } => {
            if samples == 0 {
                return Err(Error::Plan(
                    "at least one coalition sample is needed".into(),
                ));
            }
            pairs
                .iter()
                .enumerate()
                .map(|(idx, &(a, b))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(idx as u64);
                    sampled_with_rng(game, a, b, samples, &mut rng)
                })
                .collect()
        }
    };
    let mut sums = vec![0.0; players];
    for (&(a, b), v) in pairs.iter().zip(&values) {
        sums[a] += v;
        sums[b] += v;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(a, s)| s / grid.neighbors(a).len() as f64)
        .collect())
}

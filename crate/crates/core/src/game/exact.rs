//! Exact Shapley values and pairwise interactions by subset enumeration.

use rayon::prelude::*;

use super::report::{Estimator, InteractionReport};
use super::{check_player, Coalition, Game, PinnedGame, TableGame};
use crate::error::{Error, Result};

/// Enumeration limit for Shapley values and single pair interactions.
pub const MAX_EXACT_PLAYERS: usize = 20;
/// Enumeration limit for the all-pairs interaction mean.
pub const MAX_PAIRWISE_PLAYERS: usize = 16;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// `|S|! (P - |S| - 1)! / P!`
pub fn shapley_weight(coalition_size: usize, players: usize) -> f64 {
    1.0 / (players as f64 * binomial(players - 1, coalition_size))
}

/// `|S|! (P - |S| - 2)! / (P - 1)!`, the weight of the pair closed form.
fn pair_weight(coalition_size: usize, players: usize) -> f64 {
    1.0 / ((players - 1) as f64 * binomial(players - 2, coalition_size))
}

fn check_capacity(players: usize, limit: usize) -> Result<()> {
    if players > limit {
        return Err(Error::Capacity { players, limit });
    }
    Ok(())
}

/// Evaluates `game` on all `2^P` coalitions (in parallel, indexed by mask).
pub fn tabulate(game: &impl Game) -> Result<TableGame> {
    let players = game.num_players();
    check_capacity(players, MAX_EXACT_PLAYERS)?;
    let values = (0..1u64 << players)
        .into_par_iter()
        .map(|m| game.value(&Coalition::from_mask(players, m)))
        .collect();
    TableGame::new(players, values)
}

fn shapley_from_table(table: &TableGame, i: usize, weight: &dyn Fn(usize, usize) -> f64) -> f64 {
    let players = table.num_players();
    let bit = 1u64 << i;
    let weights: Vec<f64> = (0..players).map(|s| weight(s, players)).collect();
    (0..1u64 << players)
        .filter(|m| m & bit == 0)
        .map(|m| {
            weights[m.count_ones() as usize]
                * (table.value_of_mask(m | bit) - table.value_of_mask(m))
        })
        .sum()
}

fn interaction_from_table(table: &TableGame, i: usize, j: usize) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let players = table.num_players();
    let (bi, bj) = (1u64 << lo, 1u64 << hi);
    let weights: Vec<f64> = (0..players - 1).map(|s| pair_weight(s, players)).collect();
    (0..1u64 << players)
        .filter(|m| m & (bi | bj) == 0)
        .map(|m| {
            let delta = table.value_of_mask(m | bi | bj)
                - table.value_of_mask(m | bj)
                - table.value_of_mask(m | bi)
                + table.value_of_mask(m);
            weights[m.count_ones() as usize] * delta
        })
        .sum()
}

/// Shapley value of player `i` by full enumeration.
pub fn shapley_exact(game: &impl Game, i: usize) -> Result<f64> {
    shapley_exact_weighted(game, i, &shapley_weight)
}

/// Shapley-style attribution with caller-supplied weights `weight(|S|, P)`.
/// Only useful for checking that the verification battery notices wrong
/// weights; [`shapley_exact`] is this with [`shapley_weight`].
pub fn shapley_exact_weighted(
    game: &impl Game,
    i: usize,
    weight: &dyn Fn(usize, usize) -> f64,
) -> Result<f64> {
    check_capacity(game.num_players(), MAX_EXACT_PLAYERS)?;
    check_player(game, i)?;
    let table = tabulate(game)?;
    Ok(shapley_from_table(&table, i, weight))
}

/// Shapley values of every player from one tabulation.
pub fn shapley_all(game: &impl Game) -> Result<Vec<f64>> {
    let table = tabulate(game)?;
    Ok((0..table.num_players())
        .map(|i| shapley_from_table(&table, i, &shapley_weight))
        .collect())
}

fn check_pair(game: &impl Game, i: usize, j: usize) -> Result<()> {
    check_player(game, i)?;
    check_player(game, j)?;
    if i == j {
        return Err(Error::InvalidPair(i));
    }
    Ok(())
}

/// Pairwise interaction `I_ij` from the closed sum
/// `sum_{S in Omega \ {i,j}} w(|S|) [v(S+ij) - v(S+j) - v(S+i) + v(S)]`.
/// Symmetric bit for bit.
pub fn interaction_exact(game: &impl Game, i: usize, j: usize) -> Result<f64> {
    check_capacity(game.num_players(), MAX_EXACT_PLAYERS)?;
    check_pair(game, i, j)?;
    let table = tabulate(game)?;
    Ok(interaction_from_table(&table, i, j))
}

/// Interaction as the change of `i`'s Shapley value between the game where
/// `j` is always present and the game where `j` is always absent.
pub fn interaction_alt_exact(game: &impl Game, i: usize, j: usize) -> Result<f64> {
    check_capacity(game.num_players(), MAX_EXACT_PLAYERS)?;
    check_pair(game, i, j)?;
    let with = PinnedGame::new(game, j, true);
    let without = PinnedGame::new(game, j, false);
    let k = with.reindex(i);
    Ok(shapley_exact(&with, k)? - shapley_exact(&without, k)?)
}

/// Mean of `I_ij` over all pairs by brute force. `per_player_terms[i]`
/// holds `sum_{j != i} I_ij`.
pub fn mean_interaction_pairwise(game: &impl Game) -> Result<InteractionReport> {
    let players = game.num_players();
    check_capacity(players, MAX_PAIRWISE_PLAYERS)?;
    if players < 2 {
        return Err(Error::TooFewPlayers(players));
    }
    let table = tabulate(game)?;
    let pairs: Vec<(usize, usize)> = (0..players)
        .flat_map(|i| (i + 1..players).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| interaction_from_table(&table, i, j))
        .collect();
    let mut per_player = vec![0.0; players];
    for (&(i, j), v) in pairs.iter().zip(&values) {
        per_player[i] += v;
        per_player[j] += v;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(InteractionReport {
        mean_interaction: mean,
        per_player_terms: Some(per_player),
        estimator: Estimator::BruteForce,
        normalized: true,
        players,
        plan: None,
    })
}

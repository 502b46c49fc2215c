//! Cooperative games over perturbation units.
//!
//! A [`Game`] assigns a utility to every coalition of players. Players are
//! the cells of a [`Partition`] of the input (single pixels, or the cells of
//! a [`GridPartition`]). The model-backed [`CoalitionGame`] uses the attack
//! margin of `x + delta^(S)` as utility, where `delta^(S)` keeps `delta` on
//! the pixels covered by `S` and is zero elsewhere.

mod estimate;
mod exact;
mod model_game;
mod partition;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use estimate::draw_batches;
pub use estimate::{
    interaction_sampled, mean_interaction_eq4, mean_interaction_sampled, neighbor_interactions,
    sample_batches, PairEstimator, DEFAULT_PAIR_SAMPLES,
};
pub use exact::{
    interaction_alt_exact, interaction_exact, mean_interaction_pairwise, shapley_all,
    shapley_exact, shapley_exact_weighted, shapley_weight, tabulate, MAX_EXACT_PLAYERS,
    MAX_PAIRWISE_PLAYERS,
};
pub use model_game::{CoalitionGame, QuadraticGame};
pub use partition::{GridPartition, Partition};
pub use report::{Estimator, InteractionReport, SamplingPlan};

/// A set of players, stored as membership flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    members: Vec<bool>,
}

impl Coalition {
    pub fn empty(players: usize) -> Self {
        Self {
            members: vec![false; players],
        }
    }

    pub fn full(players: usize) -> Self {
        Self {
            members: vec![true; players],
        }
    }

    /// Bit `k` of `mask` marks player `k`.
    pub fn from_mask(players: usize, mask: u64) -> Self {
        Self {
            members: (0..players).map(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn from_players(players: usize, members: &[usize]) -> Self {
        let mut c = Self::empty(players);
        for &m in members {
            c.members[m] = true;
        }
        c
    }

    pub fn num_players(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, player: usize) -> bool {
        self.members[player]
    }

    pub fn insert(&mut self, player: usize) {
        self.members[player] = true;
    }

    pub fn remove(&mut self, player: usize) {
        self.members[player] = false;
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|m| *m)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(k, _)| k)
    }

    pub fn complement(&self) -> Self {
        Self {
            members: self.members.iter().map(|m| !m).collect(),
        }
    }

    pub fn as_flags(&self) -> &[bool] {
        &self.members
    }

    pub fn mask(&self) -> u64 {
        self.members
            .iter()
            .enumerate()
            .fold(0, |acc, (k, m)| if *m { acc | 1 << k } else { acc })
    }
}

/// A transferable-utility game.
pub trait Game: Sync {
    fn num_players(&self) -> usize;

    fn value(&self, coalition: &Coalition) -> f64;
}

impl<G: Game + ?Sized> Game for &G {
    fn num_players(&self) -> usize {
        (**self).num_players()
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        (**self).value(coalition)
    }
}

/// Explicit utility table indexed by coalition bitmask. Serialises as
/// `{"P": players, "values": [...]}` with `2^P` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableGame {
    #[serde(rename = "P")]
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                players,
                limit: MAX_EXACT_PLAYERS,
            });
        }
        if values.len() != 1 << players {
            return Err(Error::Shape {
                expected: vec![1 << players],
                actual: vec![values.len()],
            });
        }
        Ok(Self { players, values })
    }

    /// Tabulates `f` over every coalition.
    pub fn from_fn(players: usize, f: impl Fn(&Coalition) -> f64) -> Result<Self> {
        if players > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                players,
                limit: MAX_EXACT_PLAYERS,
            });
        }
        let values = (0..1u64 << players)
            .map(|m| f(&Coalition::from_mask(players, m)))
            .collect();
        Self::new(players, values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TableGame =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::new(raw.players, raw.values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_of_mask(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

impl Game for TableGame {
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        self.values[coalition.mask() as usize]
    }
}

/// Game defined by a closure over coalitions.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(&Coalition) -> f64 + Sync,
{
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F> Game for FnGame<F>
where
    F: Fn(&Coalition) -> f64 + Sync,
{
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        (self.f)(coalition)
    }
}

/// The `P - 1` player game obtained by pinning one player of `inner` to be
/// always present or always absent. Remaining players keep their order.
pub struct PinnedGame<G> {
    inner: G,
    pinned: usize,
    present: bool,
}

impl<G: Game> PinnedGame<G> {
    pub fn new(inner: G, pinned: usize, present: bool) -> Self {
        Self {
            inner,
            pinned,
            present,
        }
    }

    /// Index of `player` (an index of the inner game) in the pinned game.
    pub fn reindex(&self, player: usize) -> usize {
        if player > self.pinned {
            player - 1
        } else {
            player
        }
    }
}

impl<G: Game> Game for PinnedGame<G> {
    fn num_players(&self) -> usize {
        self.inner.num_players() - 1
    }

    fn value(&self, coalition: &Coalition) -> f64 {
        let mut full = Vec::with_capacity(self.inner.num_players());
        full.extend_from_slice(&coalition.as_flags()[..self.pinned]);
        full.push(self.present);
        full.extend_from_slice(&coalition.as_flags()[self.pinned..]);
        self.inner.value(&Coalition { members: full })
    }
}

pub(crate) fn check_player(game: &impl Game, player: usize) -> Result<()> {
    let players = game.num_players();
    if player >= players {
        return Err(Error::PlayerIndex {
            index: player,
            players,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalition_mask_round_trip() {
        let c = Coalition::from_mask(5, 0b10110);
        assert_eq!(c.members().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert_eq!(c.mask(), 0b10110);
        assert_eq!(c.complement().mask(), 0b01001);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn table_game_json_interface() {
        let g = TableGame::from_json(r#"{"P": 2, "values": [0.0, 1.0, 2.0, 4.0]}"#).unwrap();
        assert_eq!(g.value(&Coalition::full(2)), 4.0);
        assert!(TableGame::from_json(r#"{"P": 2, "values": [0.0]}"#).is_err());
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"P":2,"values":[0.0,1.0,2.0,4.0]}"#);
    }

    #[test]
    fn pinned_game_inserts_player() {
        let g = TableGame::from_fn(3, |c| c.mask() as f64).unwrap();
        let with = PinnedGame::new(&g, 1, true);
        assert_eq!(with.num_players(), 2);
        // players {0, 2} of the inner game are {0, 1} here
        assert_eq!(with.value(&Coalition::from_mask(2, 0b10)), 0b110 as f64);
        let without = PinnedGame::new(&g, 1, false);
        assert_eq!(without.value(&Coalition::full(2)), 0b101 as f64);
        assert_eq!(with.reindex(2), 1);
    }
}

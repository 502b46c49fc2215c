use crate::error::Result;
use crate::game::{Coalition, CoalitionGame, Game, Partition};
use crate::nn::Model;

/// Sampled interaction loss
/// `1/K sum_k [v(all) - v(all - B_k) - v(B_k) + v(none)]` on the cells of
/// `partition`, with its gradient in `delta`. `v(none)` does not depend on
/// `delta` and contributes no gradient.
pub fn interaction_objective(
    model: &Model,
    x: &[f64],
    y: usize,
    delta: &[f64],
    partition: &Partition,
    batches: &[Vec<usize>],
) -> Result<(f64, Vec<f64>)> {
    let game = CoalitionGame::new(model, x, delta, partition, y)?;
    let players = partition.num_cells();
    let (full, g_full) = game.value_and_delta_gradient(&Coalition::full(players));
    let empty = game.value(&Coalition::empty(players));
    let k = batches.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; delta.len()];
    for batch in batches {
        let inside = Coalition::from_players(players, batch);
        let (v_in, g_in) = game.value_and_delta_gradient(&inside);
        let (v_out, g_out) = game.value_and_delta_gradient(&inside.complement());
        total += full - v_out - v_in + empty;
        for (acc, ((f, a), b)) in grad.iter_mut().zip(g_full.iter().zip(&g_in).zip(&g_out)) {
            *acc += f - b - a;
        }
    }
    for g in grad.iter_mut() {
        *g /= k;
    }
    Ok((total / k, grad))
}

use serde::{Deserialize, Serialize};

use crate::attacks::AttackTrace;
use crate::error::{Error, Result};
use crate::nn::{margin, Model, Sample};

/// `[margin on target at x + delta] - [margin on target at x]`, both margins
/// `max_{y' != y} h_{y'} - h_y` on the target's logits.
pub fn transfer_utility(target: &Model, x: &[f64], y: usize, delta: &[f64]) -> Result<f64> {
    Ok(transfer_margins(target, x, y, delta)?.2)
}

fn transfer_margins(target: &Model, x: &[f64], y: usize, delta: &[f64]) -> Result<(f64, f64, f64)> {
    if delta.len() != x.len() {
        return Err(Error::Shape {
            expected: vec![x.len()],
            actual: vec![delta.len()],
        });
    }
    target.check_label(y)?;
    let clean = margin(&target.forward(x)?, y);
    let xd: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    let pert = margin(&target.forward(&xd)?, y);
    Ok((clean.0, pert.0, pert.0 - clean.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub example: usize,
    pub source_id: String,
    pub target_id: String,
    pub clean_margin: f64,
    pub perturbed_margin: f64,
    pub transfer_utility: f64,
    pub success: bool,
}

/// Hyper-parameters a report was produced under.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tags {
    pub method: String,
    pub c: Option<f64>,
    pub p_relax: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub records: Vec<TransferRecord>,
    pub success_rate: f64,
    pub mean_transfer_utility: f64,
    pub loo_steps: Option<Vec<usize>>,
    pub tags: Tags,
}

/// Evaluates one perturbation per example on a target model.
pub fn evaluate_transfer(
    source_id: &str,
    target_id: &str,
    target: &Model,
    samples: &[Sample],
    deltas: &[Vec<f64>],
    tags: Tags,
) -> Result<TransferReport> {
    if samples.len() != deltas.len() {
        return Err(Error::Analysis(format!(
            "{} examples but {} perturbations",
            samples.len(),
            deltas.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let records = samples
        .iter()
        .zip(deltas)
        .enumerate()
        .map(|(k, (s, d))| {
            let (clean, pert, tu) = transfer_margins(target, &s.x, s.label, d)?;
            let xd: Vec<f64> = s.x.iter().zip(d).map(|(a, b)| a + b).collect();
            Ok(TransferRecord {
                example: k,
                source_id: source_id.to_string(),
                target_id: target_id.to_string(),
                clean_margin: clean,
                perturbed_margin: pert,
                transfer_utility: tu,
                success: target.predict(&xd)? != s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    Ok(TransferReport {
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
        mean_transfer_utility: records.iter().map(|r| r.transfer_utility).sum::<f64>() / n,
        records,
        loo_steps: None,
        tags,
    })
}

/// `success[i][k]`: whether the `k`-th stored perturbation of example `i`
/// fools `target`.
pub fn success_matrix(
    target: &Model,
    samples: &[Sample],
    traces: &[AttackTrace],
) -> Result<Vec<Vec<bool>>> {
    if samples.len() != traces.len() {
        return Err(Error::Analysis(format!(
            "{} examples but {} traces",
            samples.len(),
            traces.len()
        )));
    }
    samples
        .iter()
        .zip(traces)
        .map(|(s, t)| {
            t.deltas
                .iter()
                .map(|d| {
                    let xd: Vec<f64> = s.x.iter().zip(d).map(|(a, b)| a + b).collect();
                    Ok(target.predict(&xd)? != s.label)
                })
                .collect()
        })
        .collect()
}

/// Leave-one-out step choice: for each example `i`, the column maximising
/// the success rate of all other examples; ties go to the smallest column.
pub fn loo_select_matrix(success: &[Vec<bool>]) -> Result<Vec<usize>> {
    let n = success.len();
    if n < 2 {
        return Err(Error::Analysis(format!(
            "leave-one-out needs at least 2 examples, got {n}"
        )));
    }
    let steps = success[0].len();
    if steps == 0 || success.iter().any(|row| row.len() != steps) {
        return Err(Error::Analysis(
            "traces must share a nonzero step count".into(),
        ));
    }
    let totals: Vec<usize> = (0..steps)
        .map(|t| success.iter().filter(|row| row[t]).count())
        .collect();
    Ok(success
        .iter()
        .map(|row| {
            let mut best = 0;
            let mut best_count = None;
            for t in 0..steps {
                let others = totals[t] - usize::from(row[t]);
                if best_count.is_none_or(|b| others > b) {
                    best = t;
                    best_count = Some(others);
                }
            }
            best
        })
        .collect())
}

/// Per-example LOO columns and the resulting transferability
/// `mean_i success[i][t*_i]`.
pub fn loo_transferability(success: &[Vec<bool>]) -> Result<(Vec<usize>, f64)> {
    let picks = loo_select_matrix(success)?;
    let hits = success
        .iter()
        .zip(&picks)
        .filter(|(row, &t)| row[t])
        .count();
    Ok((picks, hits as f64 / success.len() as f64))
}

/// [`loo_select_matrix`] on traces, reported as attack step indices.
pub fn loo_select(
    traces: &[AttackTrace],
    target: &Model,
    samples: &[Sample],
) -> Result<Vec<usize>> {
    if let Some(first) = traces.first() {
        if traces.iter().any(|t| t.step_indices != first.step_indices) {
            return Err(Error::Analysis(
                "traces must share their stored steps".into(),
            ));
        }
    }
    let success = success_matrix(target, samples, traces)?;
    let picks = loo_select_matrix(&success)?;
    Ok(picks
        .into_iter()
        .map(|k| traces[0].step_indices[k])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matrix_picks_first_step() {
        let m = vec![vec![true, true, true]; 4];
        assert_eq!(loo_select_matrix(&m).unwrap(), vec![0; 4]);
        let m = vec![vec![false; 3]; 4];
        assert_eq!(loo_select_matrix(&m).unwrap(), vec![0; 4]);
    }

    #[test]
    fn dominant_step_wins() {
        let mut m = vec![vec![false; 10]; 5];
        for row in m.iter_mut() {
            row[7] = true;
        }
        m[0][2] = true;
        assert_eq!(loo_select_matrix(&m).unwrap(), vec![7; 5]);
    }

    #[test]
    fn too_few_examples() {
        assert!(loo_select_matrix(&[vec![true]]).is_err());
        assert!(loo_select_matrix(&[vec![true], vec![true, false]]).is_err());
    }
}

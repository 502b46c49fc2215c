use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch sampling for the Monte-Carlo interaction estimator: `k` batches of
/// `batchsize` distinct players each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub k: usize,
    pub batchsize: usize,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            k: 32,
            batchsize: 32,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self, players: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Plan("K must be at least 1".into()));
        }
        if self.batchsize == 0 || self.batchsize > players {
            return Err(Error::Plan(format!(
                "batchsize {} must lie in 1..={players}",
                self.batchsize
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Closed form `1/(P-1) * mean_i [v(all) - v(all - i) - v(i) + v(none)]`.
    ExactEq4,
    /// Batch Monte-Carlo estimate, without the `1/(P-1)` factor.
    Sampled,
    /// Mean over all pairs of the enumerated pair interaction.
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub mean_interaction: f64,
    pub per_player_terms: Option<Vec<f64>>,
    pub estimator: Estimator,
    /// Whether `mean_interaction` includes the `1/(P-1)` factor.
    pub normalized: bool,
    pub players: usize,
    pub plan: Option<SamplingPlan>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation() {
        assert!(SamplingPlan::default().validate(256).is_ok());
        assert!(SamplingPlan::default().validate(16).is_err());
        let zero_k = SamplingPlan {
            k: 0,
            ..SamplingPlan::default()
        };
        assert!(zero_k.validate(64).is_err());
    }

    #[test]
    fn report_serialises_metadata() {
        let r = InteractionReport {
            mean_interaction: 0.5,
            per_player_terms: None,
            estimator: Estimator::ExactEq4,
            normalized: true,
            players: 4,
            plan: None,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"estimator\":\"exact-eq4\""));
        assert!(text.contains("\"normalized\":true"));
    }
}

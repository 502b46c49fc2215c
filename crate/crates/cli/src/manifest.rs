use std::fs;
use std::path::{Path, PathBuf};

use interlab_core::analysis::{ModelSpec, ToySetup, DEFAULT_C_VALUES, DEFAULT_P_VALUES};
use interlab_core::attacks::{AttackConfig, Method};
use interlab_core::game::{PairEstimator, SamplingPlan};
use interlab_core::nn::{DatasetSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "INTERLAB_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedAttack {
    pub name: String,
    pub config: AttackConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureEstimator {
    /// Closed-form average over all grid cells.
    Eq4,
    /// Monte-Carlo batches per the attack's sampling plan.
    Sampled,
    /// Enumeration of every pair (small grids only).
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub estimator: MeasureEstimator,
    pub sampling: SamplingPlan,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            estimator: MeasureEstimator::Eq4,
            sampling: SamplingPlan::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Base attack settings of every sweep; its seed is replaced by the
    /// manifest seed.
    pub attack: AttackConfig,
    pub c_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub interaction_only_lambda: f64,
    pub proposition_examples: usize,
    pub bootstrap_resamples: usize,
    pub heatmap_estimator: PairEstimator,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            attack: AttackConfig::default(),
            c_values: DEFAULT_C_VALUES.to_vec(),
            p_values: DEFAULT_P_VALUES.to_vec(),
            lambdas: vec![0.0, 0.5, 1.0, 2.0],
            interaction_only_lambda: 1.0,
            proposition_examples: 50,
            bootstrap_resamples: 2000,
            heatmap_estimator: PairEstimator::default(),
        }
    }
}

/// Everything needed to reproduce a run. `seed` drives training shuffles
/// and every attack; dataset and model initialisation seeds live in their
/// own specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub id: String,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub source: ModelSpec,
    pub targets: Vec<ModelSpec>,
    pub train: TrainSection,
    pub examples: usize,
    pub attacks: Vec<NamedAttack>,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub report: ReportSection,
    /// Model files; defaults to `<out>/models/<id>.model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models_dir: Option<PathBuf>,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        let setup = ToySetup::default();
        Self {
            id: "toy-default".into(),
            seed: setup.train.seed,
            dataset: setup.dataset,
            source: setup.source,
            targets: setup.targets,
            train: TrainSection {
                epochs: setup.train.epochs,
                lr: setup.train.lr,
                batch_size: setup.train.batch_size,
            },
            examples: 40,
            attacks: vec![
                NamedAttack {
                    name: "pgd".into(),
                    config: AttackConfig::default(),
                },
                NamedAttack {
                    name: "ir".into(),
                    config: AttackConfig {
                        lambda: 1.0,
                        ..AttackConfig::default().with_method(Method::Ir)
                    },
                },
            ],
            measure: MeasureSection::default(),
            report: ReportSection::default(),
            models_dir: None,
        }
    }
}

impl ExperimentManifest {
    /// Parses a manifest; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("bad manifest at `{path}`: {}", e.inner()))
        })
    }

    /// Reads `path` (or the default manifest when `None`) and applies the
    /// seed override from the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut manifest = match path {
            Some(p) => Self::from_json(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
            None => Self::default(),
        };
        if let Ok(seed) = std::env::var(SEED_ENV) {
            manifest.seed = seed.trim().parse().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={seed:?} is not an unsigned integer"))
            })?;
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(CliError::Usage(
                "bad manifest at `targets`: at least one target is needed".into(),
            ));
        }
        let mut ids: Vec<&str> = std::iter::once(&self.source)
            .chain(&self.targets)
            .map(|m| m.id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Usage(
                "bad manifest: model ids must be unique".into(),
            ));
        }
        let mut names: Vec<&str> = self.attacks.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Usage(
                "bad manifest: attack names must be unique".into(),
            ));
        }
        for id in ids.iter().chain(&names) {
            if id.is_empty()
                || !id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(CliError::Usage(format!(
                    "bad manifest: name {id:?} must be non-empty ASCII letters, digits, '-' or '_'"
                )));
            }
        }
        if self.examples < 2 {
            return Err(CliError::Usage(
                "bad manifest at `examples`: need at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn setup(&self) -> ToySetup {
        ToySetup {
            dataset: self.dataset.clone(),
            source: self.source.clone(),
            targets: self.targets.clone(),
            train: TrainConfig {
                epochs: self.train.epochs,
                lr: self.train.lr,
                batch_size: self.train.batch_size,
                seed: self.seed,
            },
        }
    }

    /// Attack config with the manifest seed applied.
    pub fn attack_config(&self, attack: &NamedAttack) -> AttackConfig {
        AttackConfig {
            seed: self.seed,
            ..attack.config.clone()
        }
    }

    pub fn report_attack(&self) -> AttackConfig {
        AttackConfig {
            seed: self.seed,
            ..self.report.attack.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of the canonical JSON encoding, in hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(
            serde_json::to_vec(self).expect("manifest serializes"),
        ))
    }

    pub fn models_dir(&self, out: &Path) -> PathBuf {
        self.models_dir
            .clone()
            .unwrap_or_else(|| out.join("models"))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let m = ExperimentManifest::default();
        assert_eq!(ExperimentManifest::from_json(&m.to_json()).unwrap(), m);
        assert_eq!(m.hash().len(), 64);
        assert_eq!(m.targets.len(), 3);
    }

    #[test]
    fn errors_name_the_field() {
        let mut v: serde_json::Value =
            serde_json::from_str(&ExperimentManifest::default().to_json()).unwrap();
        v["train"]["epochs"] = serde_json::json!("many");
        let err = ExperimentManifest::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("train.epochs"), "{err}");
        v.as_object_mut().unwrap().remove("seed");
        v["train"]["epochs"] = serde_json::json!(3);
        assert!(ExperimentManifest::from_json(&v.to_string())
            .unwrap_err()
            .to_string()
            .contains("seed"));
    }
}

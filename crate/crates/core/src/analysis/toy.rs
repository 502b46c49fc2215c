use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    accuracy, train, Activation, Architecture, Dataset, DatasetKind, DatasetSpec, Model,
    TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub arch: Architecture,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

/// Dataset plus a source model and held-out target models trained on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySetup {
    pub dataset: DatasetSpec,
    pub source: ModelSpec,
    pub targets: Vec<ModelSpec>,
    pub train: TrainConfig,
}

impl Default for ToySetup {
    /// 16x16 blobs in 10 classes; an MLP source, and residual, wide and deep
    /// MLP targets, all softplus.
    fn default() -> Self {
        let spec = |id: &str, arch: Architecture, seed: u64| ModelSpec {
            id: id.into(),
            arch,
            activation: Activation::default(),
            seed,
        };
        Self {
            dataset: DatasetSpec {
                kind: DatasetKind::Blobs {
                    num_classes: 10,
                    height: 16,
                    width: 16,
                    spread: 0.75,
                    seed: 2024,
                },
                train_size: 2000,
                test_size: 500,
            },
            source: spec(
                "source-mlp",
                Architecture::Mlp {
                    hidden: vec![64, 64],
                },
                1,
            ),
            targets: vec![
                spec(
                    "target-resmlp",
                    Architecture::ResidualMlp {
                        width: 64,
                        blocks: 2,
                    },
                    11,
                ),
                spec("target-wide", Architecture::Mlp { hidden: vec![128] }, 12),
                spec(
                    "target-deep",
                    Architecture::Mlp {
                        hidden: vec![48, 48, 48],
                    },
                    13,
                ),
            ],
            train: TrainConfig {
                epochs: 15,
                lr: 0.05,
                batch_size: 32,
                seed: 7,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedModel {
    pub id: String,
    pub arch: String,
    pub model: Model,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Zoo {
    pub dataset: Dataset,
    pub source: NamedModel,
    pub targets: Vec<NamedModel>,
}

fn fit(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<NamedModel> {
    let init = Model::init(
        &spec.arch,
        data.dim(),
        data.num_classes,
        spec.activation,
        spec.seed,
    )?;
    let cfg = TrainConfig {
        seed: cfg.seed ^ spec.seed,
        ..cfg.clone()
    };
    let (model, stats) = train(init, &data.train, &cfg)?;
    Ok(NamedModel {
        id: spec.id.clone(),
        arch: spec.arch.describe(),
        test_accuracy: accuracy(&model, &data.test),
        train_accuracy: stats.train_accuracy,
        model,
    })
}

/// Loads the dataset and trains every model (in parallel; each training run
/// is itself sequential, so the result does not depend on thread count).
pub fn build_zoo(setup: &ToySetup) -> Result<Zoo> {
    if setup.targets.is_empty() {
        return Err(Error::Config("at least one target model is needed".into()));
    }
    let dataset = setup.dataset.load()?;
    let specs: Vec<&ModelSpec> = std::iter::once(&setup.source)
        .chain(&setup.targets)
        .collect();
    let mut models = specs
        .par_iter()
        .map(|s| fit(s, &dataset, &setup.train))
        .collect::<Result<Vec<_>>>()?;
    let targets = models.split_off(1);
    let source = models.pop().expect("source model");
    Ok(Zoo {
        dataset,
        source,
        targets,
    })
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, loss_and_logit_gradient, LossKind, Model, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Plain mini-batch SGD on cross-entropy with a fixed learning rate.
/// Single-threaded and fully determined by the initial model and `cfg.seed`.
pub fn train(mut model: Model, data: &[Sample], cfg: &TrainConfig) -> Result<(Model, TrainStats)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in data {
        model.check_input(&s.x)?;
        model.check_label(s.label)?;
    }
    let batch_size = cfg.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let mut grads = model.zero_grads();
            for &i in batch {
                let s = &data[i];
                total += model.accumulate_param_grads(
                    &s.x,
                    |logits| loss_and_logit_gradient(logits, s.label, LossKind::CrossEntropy),
                    &mut grads,
                );
            }
            let scale = cfg.lr / batch.len() as f64;
            for (layer, g) in model.dense_layers_mut().into_iter().zip(&grads) {
                for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= scale * d;
                }
                for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= scale * d;
                }
            }
        }
        final_loss = total / data.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    let train_accuracy = accuracy(&model, data);
    Ok((
        model,
        TrainStats {
            epochs: cfg.epochs,
            final_loss,
            train_accuracy,
        },
    ))
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy(model: &Model, data: &[Sample]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|s| argmax(&model.logits(&s.x)) == s.label)
        .count();
    correct as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Architecture, DatasetKind, DatasetSpec};

    fn separable() -> (Vec<Sample>, Vec<Sample>) {
        let spec = DatasetSpec {
            kind: DatasetKind::Blobs {
                num_classes: 2,
                height: 2,
                width: 4,
                spread: 0.05,
                seed: 1,
            },
            train_size: 200,
            test_size: 100,
        };
        let ds = spec.load().unwrap();
        (ds.train, ds.test)
    }

    #[test]
    fn one_layer_model_separates_blobs() {
        let (train_set, test_set) = separable();
        let model = Model::init(
            &Architecture::Mlp { hidden: vec![] },
            8,
            2,
            Activation::default(),
            0,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            lr: 0.1,
            batch_size: 16,
            seed: 4,
        };
        let (model, stats) = train(model, &train_set, &cfg).unwrap();
        assert!(stats.train_accuracy >= 0.95);
        assert!(accuracy(&model, &test_set) >= 0.95);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (train_set, _) = separable();
        let model = Model::init(
            &Architecture::Mlp { hidden: vec![4] },
            8,
            2,
            Activation::default(),
            3,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, _) = train(model.clone(), &train_set, &cfg).unwrap();
        assert_eq!(trained, model);
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let (train_set, _) = separable();
        let arch = Architecture::ResidualMlp {
            width: 6,
            blocks: 1,
        };
        let model = Model::init(&arch, 8, 2, Activation::default(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (a, _) = train(model.clone(), &train_set, &cfg).unwrap();
        let (b, _) = train(model, &train_set, &cfg).unwrap();
        let bits = |m: &Model| -> Vec<u64> {
            m.dense_layers()
                .iter()
                .flat_map(|d| d.weights.iter().chain(&d.bias).map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn divergence_reports_epoch() {
        let (train_set, _) = separable();
        let model = Model::init(
            &Architecture::Mlp { hidden: vec![8] },
            8,
            2,
            Activation::Relu,
            0,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            lr: 1e200,
            batch_size: 8,
            seed: 0,
        };
        assert!(matches!(
            train(model, &train_set, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn empty_data_is_rejected() {
        let model = Model::init(
            &Architecture::Mlp { hidden: vec![] },
            8,
            2,
            Activation::default(),
            0,
        )
        .unwrap();
        assert!(matches!(
            train(model, &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }
}

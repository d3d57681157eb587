use serde::{Deserialize, Serialize};

use super::{LossBreakdown, LossMode, ModelConfig, ModelError, ModelParams, Result, RiskModel};
use crate::diffmath::{AdamConfig, AdamState};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

/// Per-epoch means of every loss term over all training examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean: LossBreakdown,
    pub min_kl_gauss: f64,
    pub min_kl_beta: f64,
    pub examples: usize,
}

/// Trains a fresh model with Adam on the mean batch loss.
///
/// Each epoch reshuffles the examples with the `"shuffle"` stream; the
/// reparameterization noise comes from the `"sampling"` stream.
pub fn train(
    config: &ModelConfig,
    examples: &[TrainExample],
    train_cfg: &TrainConfig,
) -> Result<(RiskModel, Vec<EpochStats>)> {
    let mut model = RiskModel::new(config.clone())?;
    if examples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if train_cfg.batch_size == 0 {
        return Err(ModelError::Config("batch_size must be at least 1".into()));
    }
    let mut shuffle_rng = SplitMix64::derive(config.seed, "shuffle");
    let mut noise_rng = SplitMix64::derive(config.seed, "sampling");
    let mut adam = AdamState::new(train_cfg.adam, model.params.param_count());
    let mut flat = model.params.to_flat();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    let dz = config.latent_dim;

    for epoch in 0..train_cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sums = LossBreakdown::default();
        let mut min_kl_gauss = f64::INFINITY;
        let mut min_kl_beta = f64::INFINITY;
        for (batch_idx, batch) in order.chunks(train_cfg.batch_size).enumerate() {
            let mut grad_sum = vec![0.0; flat.len()];
            for &idx in batch {
                let example = &examples[idx];
                let noise: Vec<f64> = (0..dz).map(|_| noise_rng.normal()).collect();
                let out =
                    model.loss(&example.features, &example.labels, LossMode::Train(&noise))?;
                let b = out.breakdown;
                if let Some(term) = b.non_finite_term() {
                    return Err(ModelError::NonFinite {
                        term,
                        epoch,
                        batch: batch_idx,
                        example: idx,
                    });
                }
                sums.sem += b.sem;
                sums.rej += b.rej;
                sums.kl_gauss += b.kl_gauss;
                sums.kl_beta += b.kl_beta;
                sums.reg += b.reg;
                sums.total += b.total;
                min_kl_gauss = min_kl_gauss.min(b.kl_gauss);
                min_kl_beta = min_kl_beta.min(b.kl_beta);
                for (acc, g) in grad_sum.iter_mut().zip(out.grads.to_flat()) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grad_sum {
                *g *= scale;
            }
            adam.step(&mut flat, &grad_sum)?;
            model.params.set_flat(&flat)?;
        }
        let n = examples.len() as f64;
        history.push(EpochStats {
            epoch,
            mean: LossBreakdown {
                sem: sums.sem / n,
                rej: sums.rej / n,
                kl_gauss: sums.kl_gauss / n,
                kl_beta: sums.kl_beta / n,
                reg: sums.reg / n,
                total: sums.total / n,
            },
            min_kl_gauss,
            min_kl_beta,
            examples: examples.len(),
        });
    }
    Ok((model, history))
}

impl ModelParams {
    /// Bitwise view, for determinism checks.
    pub fn to_bits(&self) -> Vec<u64> {
        self.to_flat().into_iter().map(f64::to_bits).collect()
    }
}

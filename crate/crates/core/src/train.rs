//! Deterministic mini-batch gradient descent for the vision stream.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::loss::LossBreakdown;
use crate::model::{backward, Objective, PreparedItem};
use crate::params::ModelParams;
use crate::text::{sample_text, SamplerMode, TokenSequence};
use crate::vision::{augment, AugmentationPolicy, Volume};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub sampler: SamplerMode,
    /// When off, every step sees the deterministic truncated text.
    pub sampler_enabled: bool,
    pub view_a: AugmentationPolicy,
    pub view_b: AugmentationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            sampler: SamplerMode::default(),
            sampler_enabled: true,
            view_a: AugmentationPolicy {
                noise_sigma: 0.05,
                ..AugmentationPolicy::identity()
            },
            view_b: AugmentationPolicy {
                noise_sigma: 0.05,
                ..AugmentationPolicy::identity()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.view_a.validate()?;
        self.view_b.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "learning_rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "batch_size {} must be at least 2",
                self.batch_size
            )));
        }
        if self.sampler.length() == 0 {
            return Err(Error::InvalidParameter("sampler length must be at least 1".into()));
        }
        Ok(())
    }
}

/// A tokenized report with its standardized volume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub tokens: TokenSequence,
    pub volume: Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub batches: usize,
    /// Mean over the epoch's batches.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochLog>,
}

/// Shuffled batches of `batch_size`; a trailing singleton joins the previous batch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(rng::stream_seed(seed, epoch as u64)));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().unwrap_or_default();
        if let Some(prev) = batches.last_mut() {
            prev.extend(tail);
        }
    }
    batches
}

/// Text sampling and both augmented views for one batch. The cutmix partner
/// of a member is the next member of the shuffled batch, wrapping around.
/// Items come back in ascending data index so the loss and gradient
/// reductions do not depend on the shuffle.
pub fn prepare_batch(
    params: &ModelParams,
    data: &[TrainItem],
    members: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<PreparedItem>> {
    let epoch_seed = rng::stream_seed(config.seed, (1u64 << 32) | epoch as u64);
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&pos| members[pos]);
    order
        .into_iter()
        .map(|pos| {
            let idx = members[pos];
            let item = &data[idx];
            let partner = &data[members[(pos + 1) % members.len()]].volume;
            let base = rng::item_seed(epoch_seed, idx as u64);
            let tokens = if config.sampler_enabled {
                sample_text(&item.tokens, config.sampler, rng::stream_seed(base, 0))?
            } else {
                config.sampler.truncate(&item.tokens)
            };
            let text = params.text.encode(&tokens)?;
            let view_a = augment(
                &item.volume,
                &config.view_a.with_seed(rng::stream_seed(base, 1)),
                Some(partner),
            )?;
            let view_b = augment(
                &item.volume,
                &config.view_b.with_seed(rng::stream_seed(base, 2)),
                Some(partner),
            )?;
            PreparedItem::new(&params.vision, text, &view_a, &view_b)
        })
        .collect()
}

pub fn train(data: &[TrainItem], init: ModelParams, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(data, init, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch. A non-finite loss or
/// parameter is reported as divergence.
pub fn train_with(
    data: &[TrainItem],
    init: ModelParams,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "training needs at least 2 pairs, got {}",
            data.len()
        )));
    }
    if !init.text.frozen {
        return Err(Error::InvalidParameter("the text encoder must be frozen during training".into()));
    }
    let mut params = init;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = epoch_batches(data.len(), config.batch_size, config.seed, epoch);
        let (mut mse, mut sim, mut total) = (0.0, 0.0, 0.0);
        for members in &batches {
            let items = prepare_batch(&params, data, members, config, epoch)?;
            let (loss, grads) = backward(&params, &items, &config.objective)?;
            if !loss.l_total.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            params.sgd_step(&grads, config.learning_rate)?;
            let v = &params.vision;
            if !v.weight.iter().chain(&v.bias).chain(&v.cls).all(|x| x.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            mse += loss.l_mse;
            sim += loss.l_sim;
            total += loss.l_total;
        }
        let b = batches.len() as f64;
        let log = EpochLog {
            epoch,
            batches: batches.len(),
            loss: LossBreakdown {
                l_mse: mse / b,
                l_sim: sim / b,
                l_total: total / b,
                alpha: config.objective.alpha,
            },
        };
        if !log.loss.l_total.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        on_epoch(&log);
        history.push(log);
    }
    Ok(TrainOutcome { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_every_item_once() {
        for n in [2usize, 5, 17, 33] {
            let b = epoch_batches(n, 4, 9, 3);
            let mut all: Vec<usize> = b.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!(b.iter().all(|x| x.len() >= 2));
            assert_eq!(b, epoch_batches(n, 4, 9, 3));
        }
        assert_ne!(epoch_batches(20, 4, 9, 0), epoch_batches(20, 4, 9, 1));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.batch_size = 1;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}

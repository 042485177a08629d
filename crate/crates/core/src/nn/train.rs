use alloc::format;
use alloc::vec::Vec;

use super::{compute_loss, AdamConfig, AdamState, LossKind, Mode, Network};
use crate::{Error, Result, RngState, Tensor};

/// Optimisation settings. Defaults: Adam with lr 1e-3, betas 0.9 / 0.999,
/// epsilon 1e-8, batch 32, MSE, no validation split.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Fraction of rows held back (seeded) to report a validation loss.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            loss: LossKind::Mse,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.epochs > 0 && self.batch_size > rows {
            return bad(format!("batch_size {} exceeds {} training rows", self.batch_size, rows));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad(format!("adam betas must lie in (0, 1), got {} / {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss per epoch.
    pub loss: Vec<f64>,
    /// Validation loss per epoch; empty without a validation split.
    pub validation: Vec<f64>,
}

/// Splits rows into (train, validation) index sets.
pub(crate) fn split_validation(rows: usize, fraction: f64, rng: &mut RngState) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 {
        return ((0..rows).collect(), Vec::new());
    }
    let perm = rng.permutation(rows);
    let n_val = (crate::math::ceil(rows as f64 * fraction) as usize).min(rows.saturating_sub(1));
    let mut train: Vec<usize> = perm[..rows - n_val].to_vec();
    let mut val: Vec<usize> = perm[rows - n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Minibatch Adam training. Examples are visited in a fresh seeded
/// permutation each epoch; the returned network is frozen.
pub fn train(
    mut net: Network,
    inputs: &Tensor,
    targets: &Tensor,
    cfg: &TrainConfig,
    rng: &mut RngState,
) -> Result<(Network, TrainHistory)> {
    if inputs.rows() != targets.rows() {
        return Err(Error::shape("train", inputs.shape(), targets.shape()));
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((net.freeze(), history));
    }
    let (train_idx, val_idx) = split_validation(inputs.rows(), cfg.validation_fraction, rng);
    cfg.validate(train_idx.len())?;
    net.mode = Mode::Training;
    let adam = cfg.adam();
    let mut state = AdamState::new();
    let (val_x, val_y) = (inputs.select_rows(&val_idx), targets.select_rows(&val_idx));

    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(train_idx.len());
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<usize> = chunk.iter().map(|&i| train_idx[i]).collect();
            let x = inputs.select_rows(&rows);
            let y = targets.select_rows(&rows);
            let (pred, cache) = net.forward(&x, Some(rng))?;
            let (loss, dpred) = compute_loss(cfg.loss, &pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch + 1,
                    loss,
                });
            }
            total += loss * rows.len() as f64;
            let (grads, _) = net.backward_inner(&cache, &dpred, false)?;
            net.apply_adam(&grads.flatten(), &mut state, &adam)?;
        }
        history.loss.push(total / train_idx.len() as f64);
        if !val_idx.is_empty() {
            let pred = net.predict(&val_x)?;
            history.validation.push(compute_loss(cfg.loss, &pred, &val_y)?.0);
        }
        log::debug!(
            "event=epoch epoch={} loss={}",
            epoch,
            history.loss.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok((net.freeze(), history))
}

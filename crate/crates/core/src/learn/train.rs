//! SGD-momentum training with a cosine learning-rate schedule, early
//! stopping on validation loss, and per-epoch history.
//!
//! The loop is a single deterministic sequence of updates: batches are drawn
//! by a seeded shuffle, per-sample gradients accumulate in sample order, so
//! two runs with the same seed produce bit-identical weights and histories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::masked_mse;
use super::network::{backward, build_network, forward_cached, NetworkSpec, Weights};
use super::tensor::Tensor;
use crate::dataset::{DatasetManifest, Split};
use crate::error::CoreError;
use crate::Result;
use crate::raster::{load_image, NormalizedImage};
use crate::rng::stream_rng;
use rand::seq::SliceRandom;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; cosine-decays to `lr_min` over the epoch budget.
    pub learning_rate: f64,
    pub lr_min: f64,
    pub momentum: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fixes initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 0.02,
            lr_min: 0.0,
            momentum: 0.9,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(CoreError::invalid(
                "epochs, batch_size, and patience must be positive",
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(CoreError::invalid("learning_rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::invalid("momentum must lie in [0, 1)"));
        }
        if !self.lr_min.is_finite() || self.lr_min < 0.0 || self.lr_min > self.learning_rate {
            return Err(CoreError::invalid("lr_min must lie in [0, learning_rate]"));
        }
        Ok(())
    }

    /// Cosine schedule: `learning_rate` at epoch 0 down to `lr_min` at the
    /// final epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let t = epoch as f64 / (self.epochs.saturating_sub(1).max(1)) as f64;
        self.lr_min
            + 0.5 * (self.learning_rate - self.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// One training example: input plane, target plane, loss mask, and a
/// per-sample loss weight (1 for ordinary training).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub input: Tensor,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
    pub weight: f64,
}

impl TrainSample {
    /// Builds a sample from a paired input/target image. The mask keeps
    /// cells whose target sits above the clamp floor: footprint cells are
    /// pinned exactly to the floor, and the rare open cell with no coverage
    /// is equally sentinel-valued.
    pub fn from_pair(id: &str, input: &NormalizedImage, target: &NormalizedImage) -> Result<Self> {
        if input.px != target.px {
            return Err(CoreError::invalid(format!(
                "sample {id}: input {} px vs target {} px",
                input.px, target.px
            )));
        }
        let mask: Vec<bool> = target.values.iter().map(|&v| v > 0.0).collect();
        if !mask.iter().any(|&m| m) {
            return Err(CoreError::invalid(format!(
                "sample {id}: target has no cells above the clamp floor"
            )));
        }
        Ok(TrainSample {
            id: id.to_string(),
            input: Tensor::from_vec(
                1,
                input.px,
                input.px,
                input.values.iter().map(|&v| f64::from(v)).collect(),
            ),
            target: target.values.iter().map(|&v| f64::from(v)).collect(),
            mask,
            weight: 1.0,
        })
    }
}

/// Per-epoch training record; `val_loss` is NaN when no validation set was
/// given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Loads every record of `split` from a generated dataset as train samples.
pub fn load_split_samples(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for rec in manifest.records_in_split(split) {
        let input = load_image(&dir.join(&rec.input))?;
        let target = load_image(&dir.join(&rec.target))?;
        out.push(TrainSample::from_pair(&rec.id, &input, &target)?);
    }
    Ok(out)
}

/// Weighted masked-MSE loss and gradient for one sample.
fn sample_loss_grad(w: &Weights, s: &TrainSample, grad: Option<&mut [f64]>) -> Result<f64> {
    let (out, caches) = forward_cached(w, &s.input)?;
    let (loss, d_pred) = masked_mse(&out.data, &s.target, &s.mask)?;
    if let Some(g) = grad {
        let d = Tensor::from_vec(out.channels, out.height, out.width, d_pred);
        backward(w, &caches, d, g)?;
    }
    Ok(loss)
}

fn weighted_mean_loss(w: &Weights, samples: &[TrainSample]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in samples {
        num += s.weight * sample_loss_grad(w, s, None)?;
        den += s.weight;
    }
    Ok(num / den)
}

/// One SGD-momentum update on a batch; returns the batch's weighted loss.
///
/// `velocity` is the momentum buffer (same layout as the weights); a zero
/// learning rate evaluates the loss without changing any weight.
pub fn train_step(
    w: &mut Weights,
    batch: &[TrainSample],
    lr: f64,
    momentum: f64,
    velocity: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::invalid("empty batch"));
    }
    let mut grad = vec![0.0; w.data.len()];
    let mut loss_num = 0.0;
    let mut weight_sum = 0.0;
    for s in batch {
        let mut g = vec![0.0; w.data.len()];
        let loss = sample_loss_grad(w, s, Some(&mut g))?;
        if !loss.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite loss {loss} on sample {}",
                s.id
            )));
        }
        loss_num += s.weight * loss;
        weight_sum += s.weight;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += s.weight * v;
        }
    }
    if weight_sum <= 0.0 {
        return Err(CoreError::invalid("batch weights sum to zero"));
    }
    let inv = 1.0 / weight_sum;
    for (vel, g) in velocity.iter_mut().zip(&grad) {
        *vel = momentum * *vel + g * inv;
    }
    if lr != 0.0 {
        for (wv, vel) in w.data.iter_mut().zip(velocity.iter()) {
            *wv -= lr * *vel;
        }
    }
    Ok(loss_num * inv)
}

/// Trains `init` on `train`, tracking `val` for early stopping; returns the
/// weights with the best validation loss and the full epoch history.
pub fn fit(
    init: Weights,
    train: &[TrainSample],
    val: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<(Weights, Vec<EpochRow>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CoreError::invalid("training split is empty"));
    }
    for s in train.iter().chain(val) {
        if s.input.height != init.spec.input_px {
            return Err(CoreError::invalid(format!(
                "sample {} is {} px, network expects {}",
                s.id, s.input.height, init.spec.input_px
            )));
        }
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(CoreError::invalid(format!(
                "sample {}: weight must be finite and positive",
                s.id
            )));
        }
    }
    let mut w = init;
    let mut velocity = vec![0.0; w.data.len()];
    let mut history = Vec::new();
    let mut best = w.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut rng = stream_rng(cfg.seed, "epoch-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_num = 0.0;
        let mut weight_sum = 0.0;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let bw: f64 = batch.iter().map(|s| s.weight).sum();
            let batch_loss = train_step(&mut w, &batch, lr, cfg.momentum, &mut velocity)?;
            loss_num += batch_loss * bw;
            weight_sum += bw;
        }
        let train_loss = loss_num / weight_sum;
        let val_loss = if val.is_empty() {
            f64::NAN
        } else {
            weighted_mean_loss(&w, val)?
        };
        if !train_loss.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        history.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        // Early stopping tracks validation loss, or training loss when no
        // validation set exists.
        let tracked = if val.is_empty() { train_loss } else { val_loss };
        if tracked < best_loss {
            best_loss = tracked;
            best_epoch = epoch;
            best = w.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    if !best.all_finite() {
        return Err(CoreError::Numeric("non-finite weight after training".into()));
    }
    Ok((best, history))
}

/// Builds a network from `cfg.seed` and trains it on the manifest's train
/// split, validating on the val split.
pub fn train(
    dir: &Path,
    manifest: &DatasetManifest,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(Weights, Vec<EpochRow>)> {
    let train_samples = load_split_samples(dir, manifest, Split::Train)?;
    if train_samples.is_empty() {
        return Err(CoreError::invalid("manifest has no records in the train split"));
    }
    let val_samples = load_split_samples(dir, manifest, Split::Val)?;
    let init = build_network(spec, cfg.seed)?;
    fit(init, &train_samples, &val_samples, cfg)
}

/// Writes the epoch history as CSV (`epoch,train_loss,val_loss,lr`).
pub fn write_history_csv(path: &Path, history: &[EpochRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                crate::stats::fmt_f64(r.train_loss),
                crate::stats::fmt_f64(r.val_loss),
                crate::stats::fmt_f64(r.lr),
            ]
        })
        .collect();
    crate::stats::write_csv(path, &["epoch", "train_loss", "val_loss", "lr"], &rows)
}

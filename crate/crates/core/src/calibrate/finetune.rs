//! Measurement-weighted fine-tuning.
//!
//! The loss blends two mean-squared terms in normalized units:
//! `L = lambda * MSE_meas + (1 - lambda) * MSE_sim`, where the measured term
//! averages over the cells that carry measurements (each cell's target is the
//! mean of its measurements) and the simulated term averages over every cell
//! above the clamp floor of the simulated target. Descent is plain SGD with
//! momentum at a constant low learning rate, so a few epochs nudge the model
//! toward the field data without erasing the simulation prior.

use std::collections::BTreeMap;

use crate::dataset::normalize_gain_db;
use crate::error::CoreError;
use crate::learn::{backward, forward_cached, masked_mse, Tensor, Weights};
use crate::raster::NormalizedImage;
use crate::Result;

use super::{CalibrationConfig, MeasurementPoint};

/// Maps each measured point to its nearest raster cell; cells hit more than
/// once average their measurements. Targets are normalized gains.
fn measured_cells(
    image: &NormalizedImage,
    meas: &[MeasurementPoint],
) -> Result<BTreeMap<usize, f64>> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, p) in meas.iter().enumerate() {
        let col = ((p.x_m - image.origin_x_m) / image.resolution_m).floor();
        let row = ((p.y_m - image.origin_y_m) / image.resolution_m).floor();
        if col < 0.0 || row < 0.0 || col >= image.px as f64 || row >= image.px as f64 {
            return Err(CoreError::invalid(format!(
                "measurement {i} at ({}, {}) falls outside the scene raster",
                p.x_m, p.y_m
            )));
        }
        let cell = row as usize * image.px + col as usize;
        let e = sums.entry(cell).or_insert((0.0, 0));
        e.0 += normalize_gain_db(p.path_gain_db);
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(cell, (sum, n))| (cell, sum / n as f64))
        .collect())
}

fn input_tensor(elevation: &NormalizedImage) -> Tensor {
    Tensor::from_vec(
        1,
        elevation.px,
        elevation.px,
        elevation.values.iter().map(|&v| f64::from(v)).collect(),
    )
}

struct LossParts {
    sim_target: Vec<f64>,
    sim_mask: Vec<bool>,
    meas: BTreeMap<usize, f64>,
}

impl LossParts {
    fn new(
        elevation: &NormalizedImage,
        sim_target: &NormalizedImage,
        meas: &[MeasurementPoint],
    ) -> Result<LossParts> {
        if sim_target.px != elevation.px {
            return Err(CoreError::invalid(format!(
                "sim target is {} px, elevation {}",
                sim_target.px, elevation.px
            )));
        }
        if meas.is_empty() {
            return Err(CoreError::invalid("no measured points to fine-tune on"));
        }
        let sim_mask: Vec<bool> = sim_target.values.iter().map(|&v| v > 0.0).collect();
        if !sim_mask.iter().any(|&m| m) {
            return Err(CoreError::invalid("simulated target has no cells above the floor"));
        }
        Ok(LossParts {
            sim_target: sim_target.values.iter().map(|&v| f64::from(v)).collect(),
            sim_mask,
            meas: measured_cells(elevation, meas)?,
        })
    }

    /// Loss and gradient w.r.t. the prediction plane. The limit cases skip
    /// the zero-weighted term entirely, so lambda = 0 reproduces plain
    /// training arithmetic bit for bit.
    fn eval(&self, pred: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut d_pred = vec![0.0; pred.len()];
        if lambda < 1.0 {
            let (sim_loss, sim_grad) = masked_mse(pred, &self.sim_target, &self.sim_mask)?;
            if lambda == 0.0 {
                loss = sim_loss;
                d_pred = sim_grad;
            } else {
                loss = (1.0 - lambda) * sim_loss;
                for (d, g) in d_pred.iter_mut().zip(&sim_grad) {
                    *d = (1.0 - lambda) * g;
                }
            }
        }
        if lambda > 0.0 {
            let n = self.meas.len() as f64;
            let mut meas_loss = 0.0;
            for (&cell, &target) in &self.meas {
                let e = pred[cell] - target;
                meas_loss += e * e;
                d_pred[cell] += lambda * 2.0 * e / n;
            }
            loss += lambda * meas_loss / n;
        }
        Ok((loss, d_pred))
    }
}

/// The blended fine-tuning loss at the current weights, without stepping.
pub fn weighted_loss(
    w: &Weights,
    elevation: &NormalizedImage,
    sim_target: &NormalizedImage,
    meas: &[MeasurementPoint],
    lambda: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CoreError::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let parts = LossParts::new(elevation, sim_target, meas)?;
    let (out, _) = forward_cached(w, &input_tensor(elevation))?;
    Ok(parts.eval(&out.data, lambda)?.0)
}

/// Fine-tunes `w` on one scenario's measurements; returns the updated weights
/// and the per-epoch losses (each measured before that epoch's step).
pub fn finetune(
    mut w: Weights,
    elevation: &NormalizedImage,
    sim_target: &NormalizedImage,
    meas_train: &[MeasurementPoint],
    cfg: &CalibrationConfig,
) -> Result<(Weights, Vec<f64>)> {
    cfg.validate()?;
    let parts = LossParts::new(elevation, sim_target, meas_train)?;
    let input = input_tensor(elevation);
    let mut velocity = vec![0.0; w.data.len()];
    let mut grad = vec![0.0; w.data.len()];
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (out, caches) = forward_cached(&w, &input)?;
        let (loss, d_pred) = parts.eval(&out.data, cfg.lambda_meas)?;
        if !loss.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite fine-tuning loss at epoch {epoch}"
            )));
        }
        losses.push(loss);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let d = Tensor::from_vec(out.channels, out.height, out.width, d_pred);
        backward(&w, &caches, d, &mut grad)?;
        for (vel, g) in velocity.iter_mut().zip(&grad) {
            *vel = cfg.momentum * *vel + g;
        }
        for (wv, vel) in w.data.iter_mut().zip(&velocity) {
            *wv -= cfg.learning_rate * vel;
        }
    }
    if !w.all_finite() {
        return Err(CoreError::Numeric("non-finite weight after fine-tuning".into()));
    }
    Ok((w, losses))
}

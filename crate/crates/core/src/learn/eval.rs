//! Inference packaging and the evaluation metrics: RMSE in dB, per-cell
//! error percent (absolute dB error over the 100 dB dynamic range), its
//! ECDF, and the median.

use std::path::Path;
use std::time::{Duration, Instant};

use super::network::{forward_values, Weights};
use crate::dataset::{denormalize_gain, DatasetManifest, Split};
use crate::error::CoreError;
use crate::propagate::{RadioMap, GAIN_CEIL_DB, GAIN_FLOOR_DB};
use crate::Result;
use crate::raster::{load_image, NormalizedImage, TxLocation, DEFAULT_TX_HEIGHT_M};
use crate::stats::Ecdf;

/// Evaluation summary over one split: pooled per-cell statistics.
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub rmse_db: f64,
    pub median_error_percent: f64,
    /// ECDF of per-cell error percent, pooled over all masked cells.
    pub error_percent_ecdf: Ecdf,
    pub n_samples: usize,
    pub n_cells: usize,
}

/// Runs the network on an elevation image and denormalizes the output into a
/// radio map (`db = floor + range * v`), reporting the forward wall time.
/// The transmitter sits at the image's center-cell convention.
pub fn predict_radio_map(w: &Weights, elevation: &NormalizedImage) -> Result<(RadioMap, Duration)> {
    let started = Instant::now();
    let values = forward_values(w, elevation)?;
    let elapsed = started.elapsed();
    let gains_db: Vec<f64> = values.iter().map(|&v| denormalize_gain(v)).collect();
    let center = elevation.tx_index();
    let row = center / elevation.px;
    let col = center % elevation.px;
    let x_m = elevation.origin_x_m + (col as f64 + 0.5) * elevation.resolution_m;
    let y_m = elevation.origin_y_m + (row as f64 + 0.5) * elevation.resolution_m;
    Ok((
        RadioMap {
            width_px: elevation.px,
            height_px: elevation.px,
            resolution_m: elevation.resolution_m,
            origin_x_m: elevation.origin_x_m,
            origin_y_m: elevation.origin_y_m,
            gains_db,
            tx: TxLocation {
                x_m,
                y_m,
                height_m: DEFAULT_TX_HEIGHT_M,
            },
        },
        elapsed,
    ))
}

/// One prediction/target pair in normalized units plus the cell mask.
pub type PredictionPair = (Vec<f64>, Vec<f64>, Vec<bool>);

/// Pools per-cell errors over prediction/target pairs. Errors are measured
/// in dB (the normalization is affine, so `d_db = range * d_v`); error
/// percent divides by the 100 dB dynamic range.
pub fn metrics_from_predictions(pairs: &[PredictionPair]) -> Result<EvalMetrics> {
    let range = GAIN_CEIL_DB - GAIN_FLOOR_DB;
    let mut errors = Vec::new();
    let mut sq_sum = 0.0;
    for (i, (pred, target, mask)) in pairs.iter().enumerate() {
        if pred.len() != target.len() || pred.len() != mask.len() {
            return Err(CoreError::invalid(format!(
                "prediction pair {i}: mismatched lengths"
            )));
        }
        for ((&p, &t), &m) in pred.iter().zip(target).zip(mask) {
            if m {
                let d_db = range * (p - t);
                sq_sum += d_db * d_db;
                errors.push(d_db.abs() / range * 100.0);
            }
        }
    }
    if errors.is_empty() {
        return Err(CoreError::invalid("no masked cells to evaluate"));
    }
    let n = errors.len();
    let rmse_db = (sq_sum / n as f64).sqrt();
    let ecdf = Ecdf::new(errors)?;
    Ok(EvalMetrics {
        rmse_db,
        median_error_percent: ecdf.median(),
        error_percent_ecdf: ecdf,
        n_samples: pairs.len(),
        n_cells: n,
    })
}

/// Evaluates the model over every record of `split`, pooling cells across
/// samples. The mask keeps cells whose target is above the clamp floor.
pub fn evaluate(
    w: &Weights,
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<EvalMetrics> {
    let mut pairs = Vec::new();
    for rec in manifest.records_in_split(split) {
        let input = load_image(&dir.join(&rec.input))?;
        let target = load_image(&dir.join(&rec.target))?;
        let pred = forward_values(w, &input)?;
        let target_v: Vec<f64> = target.values.iter().map(|&v| f64::from(v)).collect();
        let mask: Vec<bool> = target.values.iter().map(|&v| v > 0.0).collect();
        pairs.push((pred, target_v, mask));
    }
    if pairs.is_empty() {
        return Err(CoreError::invalid(format!(
            "no records in split {split:?}"
        )));
    }
    metrics_from_predictions(&pairs)
}

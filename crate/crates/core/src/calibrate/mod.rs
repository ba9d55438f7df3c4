//! Calibration against sparse field measurements.
//!
//! A trained model carries its training simulator's material assumptions into
//! the field, where they are wrong. This module closes that gap with a small
//! measurement budget: cluster the measured points geographically, fine-tune
//! on a fraction of the clusters with a loss that blends measured and
//! simulated targets, and score the result on the held-out clusters. A
//! synthetic-reality generator stands in for the measurement campaign so the
//! whole loop runs on the desk.

mod finetune;
mod measure;
mod split;
mod trials;

pub use finetune::{finetune, weighted_loss};
pub use measure::{
    load_measurements, save_measurements, synth_reality, MeasurementPoint, MeasurementSet,
    Perturbation, Provenance,
};
pub use split::{geographic_split, kmeans, GeoSplit};
pub use trials::{
    calibration_trials, scenarios_from_manifest, write_trial_report, TrialReport, TrialScenario,
};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Knobs for the calibration loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Fraction of measured points assigned to fine-tuning, by whole
    /// clusters.
    pub train_fraction: f64,
    /// Weight of the measured-cell loss term; the simulated target gets the
    /// complement.
    pub lambda_meas: f64,
    pub n_clusters: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Length of the synthetic measurement route, points.
    pub route_points: usize,
    pub trials: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            train_fraction: 0.20,
            lambda_meas: 0.8,
            n_clusters: 8,
            epochs: 30,
            learning_rate: 0.003,
            momentum: 0.9,
            route_points: 256,
            trials: 20,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CoreError::invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda_meas) {
            return Err(CoreError::invalid(format!(
                "lambda_meas {} outside [0, 1]",
                self.lambda_meas
            )));
        }
        if self.n_clusters < 2 {
            return Err(CoreError::invalid("n_clusters must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(CoreError::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::invalid("momentum must lie in [0, 1)"));
        }
        if self.route_points < 2 {
            return Err(CoreError::invalid("route_points must be at least 2"));
        }
        if self.trials == 0 {
            return Err(CoreError::invalid("trials must be at least 1"));
        }
        Ok(())
    }
}

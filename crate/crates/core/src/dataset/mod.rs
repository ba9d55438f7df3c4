//! Training-pair generation, manifests, and leakage-safe splitting.
//!
//! A dataset is a directory of paired raster containers plus a JSON manifest.
//! Each base scenario is one (scene, transmitter) pair: the elevation grid is
//! cropped around the transmitter at a randomly drawn extent, the cropped
//! window is traced into a radio map, and both rasters are stored normalized
//! to `[0, 1]`. The remaining variants are geometric transforms of the base
//! pair; the map oracle commutes with those transforms exactly, so permuting
//! the base target is bit-identical to re-tracing the permuted scene.
//!
//! The manifest is written last and atomically: its presence marks a complete
//! dataset. K-fold splitting assigns whole base scenarios to folds so that no
//! augmented variant of a training scenario can leak into validation or test.

mod generate;
mod manifest;
mod split;

pub use generate::{generate_dataset, rebuild_window, SceneSource, SAMPLES_DIR};
pub use manifest::{
    load_manifest, save_manifest, scene_digest, DatasetManifest, GeneratorConfig, SampleRecord,
    SceneSourceSpec, SkippedRecord, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use split::{apply_assignment, split_kfold, FoldAssignment, Split};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::propagate::{PropagationConfig, GAIN_CEIL_DB, GAIN_FLOOR_DB};
use crate::raster::{DEFAULT_TX_HEIGHT_M, EXTENT_RANGE_M};
use crate::Result;

/// Map a clamped path gain in dB to the unit interval: `(db + 150) / 100`.
pub fn normalize_gain_db(db: f64) -> f64 {
    (db - GAIN_FLOOR_DB) / (GAIN_CEIL_DB - GAIN_FLOOR_DB)
}

/// Inverse of [`normalize_gain_db`]: `-150 + 100 * v`.
pub fn denormalize_gain(v: f64) -> f64 {
    GAIN_FLOOR_DB + (GAIN_CEIL_DB - GAIN_FLOOR_DB) * v
}

/// Sample-generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub propagation: PropagationConfig,
    /// Side length of both output rasters, pixels.
    pub out_px: usize,
    /// Crop extents are drawn uniformly from this range, meters.
    pub extent_min_m: f64,
    pub extent_max_m: f64,
    /// Leading count of the six transform variants kept per base pair (1-6).
    pub augment_variants: usize,
    /// Transmitter antenna height above local terrain, meters.
    pub tx_height_m: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            propagation: PropagationConfig::default(),
            out_px: 64,
            extent_min_m: EXTENT_RANGE_M.0,
            extent_max_m: EXTENT_RANGE_M.1,
            augment_variants: 6,
            tx_height_m: DEFAULT_TX_HEIGHT_M,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        if self.out_px < 8 {
            return Err(CoreError::invalid("out_px must be at least 8"));
        }
        if !(self.extent_min_m >= EXTENT_RANGE_M.0)
            || !(self.extent_max_m <= EXTENT_RANGE_M.1)
            || !(self.extent_min_m <= self.extent_max_m)
        {
            return Err(CoreError::invalid(format!(
                "extent range [{}, {}] must lie inside [{}, {}]",
                self.extent_min_m, self.extent_max_m, EXTENT_RANGE_M.0, EXTENT_RANGE_M.1
            )));
        }
        if self.augment_variants == 0 || self.augment_variants > 6 {
            return Err(CoreError::invalid(format!(
                "augment_variants {} outside 1-6",
                self.augment_variants
            )));
        }
        if !(self.tx_height_m > 0.0) || !self.tx_height_m.is_finite() {
            return Err(CoreError::invalid("tx height must be positive"));
        }
        Ok(())
    }
}

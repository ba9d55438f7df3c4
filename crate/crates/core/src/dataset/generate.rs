//! Dataset generation: crop, trace, augment, store.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{
    normalize_gain_db, save_manifest, scene_digest, DatasetConfig, DatasetManifest,
    GeneratorConfig, SampleRecord, SceneSourceSpec, SkippedRecord, MANIFEST_VERSION,
};
use crate::error::CoreError;
use crate::propagate::compute_radio_map;
use crate::raster::{
    apply_transform, crop_window, normalize_inverted, sample_tx_locations, synth_city,
    ElevationGrid, GeometricTransform, NormalizedImage, TxLocation,
};
use crate::rng::{derive_seed, stream_rng};
use crate::Result;

/// Sample containers live under this directory next to the manifest.
pub const SAMPLES_DIR: &str = "samples";

/// Base scenes to generate samples from.
#[derive(Debug, Clone)]
pub enum SceneSource {
    /// Caller-provided elevation grids.
    Grids(Vec<ElevationGrid>),
    /// Synthetic cities; scene `i` uses the seed derived from
    /// `(master_seed, "scene", i)`.
    Synthetic { params: crate::raster::CityParams, count: usize },
}

impl SceneSource {
    fn spec(&self) -> SceneSourceSpec {
        match self {
            SceneSource::Grids(grids) => SceneSourceSpec::Grids {
                count: grids.len(),
                digest: scene_digest(grids),
            },
            SceneSource::Synthetic { params, count } => SceneSourceSpec::Synthetic {
                params: params.clone(),
                count: *count,
            },
        }
    }
}

fn scene_id(index: usize) -> String {
    format!("scene-{index:04}")
}

fn base_id(scene: &str, tx_index: usize) -> String {
    format!("{scene}-tx{tx_index:02}")
}

struct BaseJob {
    scene_index: usize,
    scene_id: String,
    base_id: String,
    tx: TxLocation,
    extent_m: f64,
}

enum JobOutcome {
    Done(Vec<SampleRecord>),
    Skipped(SkippedRecord),
}

/// Generate the full training set into `out_dir` and return its manifest.
///
/// Each (scene, tx) base scenario yields one traced pair plus transformed
/// variants; a scenario whose crop or trace fails is recorded under
/// `skipped` instead of being silently redrawn. The manifest is written last,
/// atomically, as the completion marker. Identical inputs and seed produce
/// byte-identical output trees at any thread count.
pub fn generate_dataset(
    source: &SceneSource,
    n_tx: usize,
    cfg: &DatasetConfig,
    out_dir: &Path,
    master_seed: u64,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if n_tx == 0 {
        return Err(CoreError::invalid("n_tx must be at least 1"));
    }
    let spec = source.spec();
    if spec.scene_count() == 0 {
        return Err(CoreError::invalid("scene source is empty"));
    }
    let samples_dir = out_dir.join(SAMPLES_DIR);
    fs::create_dir_all(&samples_dir).map_err(|e| CoreError::io(&samples_dir, e))?;

    let synthesized: Vec<ElevationGrid> = match source {
        SceneSource::Grids(_) => Vec::new(),
        SceneSource::Synthetic { params, count } => (0..*count)
            .map(|i| synth_city(params, derive_seed(master_seed, "scene", i as u64)))
            .collect::<Result<_>>()?,
    };
    let scenes: Vec<&ElevationGrid> = match source {
        SceneSource::Grids(grids) => grids.iter().collect(),
        SceneSource::Synthetic { .. } => synthesized.iter().collect(),
    };

    // Draw transmitters and extents up front; the draws depend only on seeds
    // and indices, never on other scenarios' outcomes.
    let mut jobs: Vec<BaseJob> = Vec::new();
    let mut skipped: Vec<SkippedRecord> = Vec::new();
    for (s, grid) in scenes.iter().enumerate() {
        let sid = scene_id(s);
        let mut rng = stream_rng(master_seed, "tx", s as u64);
        let txs = match sample_tx_locations(grid, n_tx, cfg.tx_height_m, &mut rng) {
            Ok(txs) => txs,
            Err(e) => {
                skipped.push(SkippedRecord {
                    base_id: sid.clone(),
                    scene_id: sid,
                    tx: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for (t, tx) in txs.into_iter().enumerate() {
            let base_index = (s * n_tx + t) as u64;
            let extent_m = stream_rng(master_seed, "extent", base_index)
                .gen_range(cfg.extent_min_m..=cfg.extent_max_m);
            jobs.push(BaseJob {
                scene_index: s,
                scene_id: scene_id(s),
                base_id: base_id(&scene_id(s), t),
                tx,
                extent_m,
            });
        }
    }

    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .map(|job| generate_base(job, scenes[job.scene_index], cfg, out_dir))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for outcome in outcomes {
        match outcome {
            JobOutcome::Done(mut r) => records.append(&mut r),
            JobOutcome::Skipped(s) => skipped.push(s),
        }
    }

    let config = GeneratorConfig {
        source: spec,
        n_tx,
        dataset: cfg.clone(),
    };
    let config_hash = config.hash();
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        master_seed,
        config,
        config_hash,
        records,
        skipped,
    };
    save_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Crop, trace, and store one base scenario with its transform variants.
/// Computation failures become a skip record; file failures abort.
fn generate_base(
    job: &BaseJob,
    grid: &ElevationGrid,
    cfg: &DatasetConfig,
    out_dir: &Path,
) -> Result<JobOutcome> {
    let skip = |e: CoreError| {
        Ok(JobOutcome::Skipped(SkippedRecord {
            base_id: job.base_id.clone(),
            scene_id: job.scene_id.clone(),
            tx: Some(job.tx),
            reason: e.to_string(),
        }))
    };
    let (window, tx_snap) = match crop_window(grid, &job.tx, job.extent_m, cfg.out_px) {
        Ok(w) => w,
        Err(e) => return skip(e),
    };
    let input = normalize_inverted(&window);
    let map = match compute_radio_map(&window, &tx_snap, &cfg.propagation) {
        Ok(m) => m,
        Err(e) => return skip(e),
    };
    let target: Vec<f32> = map
        .gains_db
        .iter()
        .map(|&db| normalize_gain_db(db) as f32)
        .collect();

    let mut records = Vec::with_capacity(cfg.augment_variants);
    for t in &GeometricTransform::ALL[..cfg.augment_variants] {
        let id = format!("{}-{}", job.base_id, t.id());
        let input_ref = format!("{SAMPLES_DIR}/{id}.input");
        let target_ref = format!("{SAMPLES_DIR}/{id}.target");
        crate::raster::save_image(&out_dir.join(&input_ref), &apply_transform(&input, *t))?;
        let target_img = NormalizedImage {
            px: cfg.out_px,
            resolution_m: window.resolution_m,
            origin_x_m: window.origin_x_m,
            origin_y_m: window.origin_y_m,
            values: t.apply_values(cfg.out_px, &target),
        };
        crate::raster::save_image(&out_dir.join(&target_ref), &target_img)?;
        records.push(SampleRecord {
            id,
            base_id: job.base_id.clone(),
            scene_id: job.scene_id.clone(),
            tx: tx_snap,
            extent_m: job.extent_m,
            transform: *t,
            fold: None,
            split: None,
            input: input_ref,
            target: target_ref,
        });
    }
    Ok(JobOutcome::Done(records))
}

/// Recompute the cropped elevation window behind a sample from the
/// deterministic generation pipeline.
///
/// Synthetic scenes are regrown from the manifest's config and seed; for a
/// grid source the original `grids` must be supplied and are checked against
/// the recorded digest. Returns the window and the snapped transmitter, both
/// in the untransformed (identity-variant) frame.
pub fn rebuild_window(
    manifest: &DatasetManifest,
    record: &SampleRecord,
    grids: Option<&[ElevationGrid]>,
) -> Result<(ElevationGrid, TxLocation)> {
    let index: usize = record
        .scene_id
        .strip_prefix("scene-")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            CoreError::invalid(format!("scene id {:?} is not indexable", record.scene_id))
        })?;

    let scene = match &manifest.config.source {
        SceneSourceSpec::Synthetic { params, count } => {
            if index >= *count {
                return Err(CoreError::invalid(format!(
                    "scene index {index} outside the {count} synthetic scenes"
                )));
            }
            synth_city(params, derive_seed(manifest.master_seed, "scene", index as u64))?
        }
        SceneSourceSpec::Grids { count, digest } => {
            let grids = grids.ok_or_else(|| {
                CoreError::invalid("manifest uses a grid source; pass the original grids")
            })?;
            if grids.len() != *count || &scene_digest(grids) != digest {
                return Err(CoreError::invalid(
                    "supplied grids do not match the manifest's scene digest",
                ));
            }
            grids
                .get(index)
                .ok_or_else(|| CoreError::invalid(format!("scene index {index} out of range")))?
                .clone()
        }
    };

    crop_window(
        &scene,
        &record.tx,
        record.extent_m,
        manifest.config.dataset.out_px,
    )
}

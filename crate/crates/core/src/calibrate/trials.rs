//! Repeated calibration trials with randomized geographic splits.
//!
//! Each trial synthesizes a fresh measurement campaign, splits it
//! geographically, fine-tunes a private copy of the base model on the train
//! clusters, and scores three predictors on the held-out points: the
//! misconfigured oracle (the clean simulation the model was trained on), the
//! uncalibrated model, and the calibrated model. Errors pool across trials
//! into one ECDF per predictor.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{denormalize_gain, rebuild_window, DatasetManifest};
use crate::error::CoreError;
use crate::learn::{forward_values, Weights};
use crate::propagate::{PropagationConfig, GAIN_CEIL_DB, GAIN_FLOOR_DB};
use crate::raster::{load_image, ElevationGrid, GeometricTransform, NormalizedImage, TxLocation};
use crate::rng::derive_seed;
use crate::stats::{write_ecdf_csv, Ecdf};
use crate::Result;

use super::{finetune, geographic_split, synth_reality, CalibrationConfig, Perturbation};

/// One scenario a trial can draw: the traced window, its transmitter, and the
/// model-facing rasters.
#[derive(Debug, Clone)]
pub struct TrialScenario {
    pub scene_id: String,
    pub window: ElevationGrid,
    pub tx: TxLocation,
    pub input: NormalizedImage,
    pub sim_target: NormalizedImage,
}

/// Loads the identity-variant records of a dataset as trial scenarios.
pub fn scenarios_from_manifest(
    dir: &Path,
    manifest: &DatasetManifest,
    grids: Option<&[ElevationGrid]>,
    limit: Option<usize>,
) -> Result<Vec<TrialScenario>> {
    let mut out = Vec::new();
    for rec in &manifest.records {
        if rec.transform != GeometricTransform::Identity {
            continue;
        }
        if let Some(cap) = limit {
            if out.len() == cap {
                break;
            }
        }
        let (window, tx) = rebuild_window(manifest, rec, grids)?;
        out.push(TrialScenario {
            scene_id: rec.scene_id.clone(),
            window,
            tx,
            input: load_image(&dir.join(&rec.input))?,
            sim_target: load_image(&dir.join(&rec.target))?,
        });
    }
    if out.is_empty() {
        return Err(CoreError::invalid("manifest holds no identity records"));
    }
    Ok(out)
}

/// Pooled result of a trial run.
#[derive(Debug, Clone)]
pub struct TrialReport {
    pub trials_requested: usize,
    pub trials_completed: usize,
    pub failures: Vec<String>,
    pub misconfigured: Option<Ecdf>,
    pub uncalibrated: Option<Ecdf>,
    pub calibrated: Option<Ecdf>,
}

/// Flat, serializable digest of a [`TrialReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials_requested: usize,
    pub trials_completed: usize,
    pub n_failures: usize,
    pub n_test_points: usize,
    /// Median error-percent per predictor; absent when no trial completed.
    pub median_error_percent: BTreeMap<String, f64>,
}

impl TrialReport {
    pub fn summary(&self) -> TrialSummary {
        let mut medians = BTreeMap::new();
        for (name, ecdf) in [
            ("misconfigured_oracle", &self.misconfigured),
            ("uncalibrated", &self.uncalibrated),
            ("calibrated", &self.calibrated),
        ] {
            if let Some(e) = ecdf {
                medians.insert(name.to_string(), e.median());
            }
        }
        TrialSummary {
            trials_requested: self.trials_requested,
            trials_completed: self.trials_completed,
            n_failures: self.failures.len(),
            n_test_points: self.misconfigured.as_ref().map_or(0, |e| e.len()),
            median_error_percent: medians,
        }
    }
}

struct TrialOutcome {
    misconfigured: Vec<f64>,
    uncalibrated: Vec<f64>,
    calibrated: Vec<f64>,
}

fn run_trial(
    t: usize,
    base: &Weights,
    scenario: &TrialScenario,
    uncal_db: &[f64],
    prop: &PropagationConfig,
    pert: &Perturbation,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    let t_seed = derive_seed(seed, "trial", t as u64);
    let meas = synth_reality(
        &scenario.window,
        &scenario.tx,
        prop,
        pert,
        cfg.route_points,
        t_seed,
        &scenario.scene_id,
    )?;
    let split = geographic_split(&meas, cfg, derive_seed(t_seed, "split", 0))?;
    let train_points: Vec<_> = split.train.iter().map(|&i| meas.points[i]).collect();
    let (tuned, _) = finetune(
        base.clone(),
        &scenario.input,
        &scenario.sim_target,
        &train_points,
        cfg,
    )?;
    let cal_db: Vec<f64> = forward_values(&tuned, &scenario.input)?
        .iter()
        .map(|&v| denormalize_gain(v))
        .collect();

    let range = GAIN_CEIL_DB - GAIN_FLOOR_DB;
    let img = &scenario.input;
    let mut outcome = TrialOutcome {
        misconfigured: Vec::with_capacity(split.test.len()),
        uncalibrated: Vec::with_capacity(split.test.len()),
        calibrated: Vec::with_capacity(split.test.len()),
    };
    for &i in &split.test {
        let p = &meas.points[i];
        let col = ((p.x_m - img.origin_x_m) / img.resolution_m).floor() as usize;
        let row = ((p.y_m - img.origin_y_m) / img.resolution_m).floor() as usize;
        let cell = row * img.px + col;
        let sim_db = denormalize_gain(f64::from(scenario.sim_target.values[cell]));
        let ep = |pred: f64| (pred - p.path_gain_db).abs() / range * 100.0;
        outcome.misconfigured.push(ep(sim_db));
        outcome.uncalibrated.push(ep(uncal_db[cell]));
        outcome.calibrated.push(ep(cal_db[cell]));
    }
    Ok(outcome)
}

/// Runs `cfg.trials` independent calibration trials over the scenario pool
/// (round-robin) and pools held-out errors. Failed trials are recorded and do
/// not abort the run. Deterministic per seed at any thread count.
pub fn calibration_trials(
    base: &Weights,
    scenarios: &[TrialScenario],
    prop: &PropagationConfig,
    pert: &Perturbation,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<TrialReport> {
    cfg.validate()?;
    pert.validate()?;
    if scenarios.is_empty() {
        return Err(CoreError::invalid("no trial scenarios"));
    }
    for (i, s) in scenarios.iter().enumerate() {
        if s.input.px != base.spec.input_px || s.sim_target.px != base.spec.input_px {
            return Err(CoreError::invalid(format!(
                "scenario {i} rasters are {} px, model expects {}",
                s.input.px, base.spec.input_px
            )));
        }
    }
    // The uncalibrated prediction per scenario is trial-invariant.
    let uncal_db: Vec<Vec<f64>> = scenarios
        .iter()
        .map(|s| {
            Ok(forward_values(base, &s.input)?
                .iter()
                .map(|&v| denormalize_gain(v))
                .collect())
        })
        .collect::<Result<_>>()?;

    let results: Vec<std::result::Result<TrialOutcome, String>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let s = t % scenarios.len();
            run_trial(t, base, &scenarios[s], &uncal_db[s], prop, pert, cfg, seed)
                .map_err(|e| format!("trial {t} on {}: {e}", scenarios[s].scene_id))
        })
        .collect();

    let mut misconfigured = Vec::new();
    let mut uncalibrated = Vec::new();
    let mut calibrated = Vec::new();
    let mut failures = Vec::new();
    let mut completed = 0usize;
    for r in results {
        match r {
            Ok(o) => {
                completed += 1;
                misconfigured.extend(o.misconfigured);
                uncalibrated.extend(o.uncalibrated);
                calibrated.extend(o.calibrated);
            }
            Err(msg) => failures.push(msg),
        }
    }
    let ecdf = |v: Vec<f64>| if v.is_empty() { None } else { Ecdf::new(v).ok() };
    Ok(TrialReport {
        trials_requested: cfg.trials,
        trials_completed: completed,
        failures,
        misconfigured: ecdf(misconfigured),
        uncalibrated: ecdf(uncalibrated),
        calibrated: ecdf(calibrated),
    })
}

/// Writes `{base}.json` (summary + failures) and `{base}.ecdf.csv`.
pub fn write_trial_report(base: &Path, report: &TrialReport) -> Result<()> {
    #[derive(Serialize)]
    struct FullSummary<'a> {
        #[serde(flatten)]
        summary: TrialSummary,
        failures: &'a [String],
    }
    let jpath = base.with_extension("json");
    let text = serde_json::to_string_pretty(&FullSummary {
        summary: report.summary(),
        failures: &report.failures,
    })
    .map_err(|e| CoreError::Numeric(format!("report serialization: {e}")))?;
    std::fs::write(&jpath, text + "\n").map_err(|e| CoreError::io(&jpath, e))?;

    let mut groups: Vec<(&str, &Ecdf)> = Vec::new();
    for (name, ecdf) in [
        ("misconfigured_oracle", &report.misconfigured),
        ("uncalibrated", &report.uncalibrated),
        ("calibrated", &report.calibrated),
    ] {
        if let Some(e) = ecdf {
            groups.push((name, e));
        }
    }
    write_ecdf_csv(csv_path(base), &groups)
}

fn csv_path(base: &Path) -> PathBuf {
    base.with_extension("ecdf.csv")
}

//! Measurement sets and the synthetic-reality generator.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::propagate::{compute_radio_map, PropagationConfig, GAIN_CEIL_DB, GAIN_FLOOR_DB};
use crate::raster::{ElevationGrid, TxLocation};
use crate::rng::stream_rng;
use crate::stats::{fmt_f64, write_csv};
use crate::Result;

/// One measured sample: world position and clamped path gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub path_gain_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SyntheticReality,
    Imported,
}

/// A measurement campaign's worth of points over one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub points: Vec<MeasurementPoint>,
    pub scene_id: String,
    pub provenance: Provenance,
}

impl MeasurementSet {
    /// Every gain must be finite and inside the clamp range.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x_m.is_finite() && p.y_m.is_finite()) {
                return Err(CoreError::invalid(format!("point {i}: non-finite position")));
            }
            if !(GAIN_FLOOR_DB..=GAIN_CEIL_DB).contains(&p.path_gain_db) {
                return Err(CoreError::invalid(format!(
                    "point {i}: path gain {} outside [{GAIN_FLOOR_DB}, {GAIN_CEIL_DB}]",
                    p.path_gain_db
                )));
            }
        }
        Ok(())
    }
}

/// Sim-to-real gap model applied on top of the clean oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    /// Added to the material's reflection coefficient.
    pub gamma_offset: f64,
    /// Global offset on every measured gain, dB.
    pub bias_db: f64,
    /// Marginal standard deviation of the smoothed noise field, dB.
    pub noise_sigma_db: f64,
    /// Gaussian smoothing length of the noise field, cells.
    pub correlation_cells: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            gamma_offset: -0.15,
            bias_db: 4.0,
            noise_sigma_db: 3.0,
            correlation_cells: 5.0,
        }
    }
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma_offset.is_finite() || !self.bias_db.is_finite() {
            return Err(CoreError::invalid("perturbation offsets must be finite"));
        }
        if !(self.noise_sigma_db >= 0.0 && self.noise_sigma_db.is_finite()) {
            return Err(CoreError::invalid("noise sigma must be non-negative"));
        }
        if !(self.correlation_cells > 0.0 && self.correlation_cells.is_finite()) {
            return Err(CoreError::invalid("correlation length must be positive"));
        }
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        self.gamma_offset == 0.0 && self.bias_db == 0.0 && self.noise_sigma_db == 0.0
    }
}

/// Zero-mean unit-variance noise field with Gaussian spatial correlation.
///
/// White noise convolved with a truncated Gaussian kernel; each output cell is
/// renormalized by the in-bounds kernel energy, so the marginal variance stays
/// one all the way to the borders.
fn correlated_noise_field(
    width: usize,
    height: usize,
    correlation_cells: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = stream_rng(seed, "noise", 0);
    let white: Vec<f64> = (0..width * height)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let radius = (3.0 * correlation_cells).ceil() as isize;
    let inv_two_s2 = 1.0 / (2.0 * correlation_cells * correlation_cells);
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 * inv_two_s2).exp())
        .collect();
    let mut out = vec![0.0; width * height];
    for row in 0..height as isize {
        for col in 0..width as isize {
            let mut acc = 0.0;
            let mut energy = 0.0;
            for dr in -radius..=radius {
                let r = row + dr;
                if r < 0 || r >= height as isize {
                    continue;
                }
                let kr = kernel[(dr + radius) as usize];
                for dc in -radius..=radius {
                    let c = col + dc;
                    if c < 0 || c >= width as isize {
                        continue;
                    }
                    let wgt = kr * kernel[(dc + radius) as usize];
                    acc += wgt * white[(r * width as isize + c) as usize];
                    energy += wgt * wgt;
                }
            }
            out[(row * width as isize + col) as usize] = acc / energy.sqrt();
        }
    }
    out
}

/// Random-walk measurement route over open (non-footprint) cells.
///
/// The walk keeps its heading with high probability and occasionally jumps to
/// a fresh start, like a drive that sweeps several streets; a purely
/// diffusive walk would sit inside a couple of noise-correlation patches and
/// make the sampled noise statistics meaningless.
fn measurement_route(window: &ElevationGrid, n_points: usize, seed: u64) -> Result<Vec<usize>> {
    let footprint = window.footprint_mask();
    let open: Vec<usize> = (0..footprint.len()).filter(|&i| !footprint[i]).collect();
    if open.is_empty() {
        return Err(CoreError::TooFewOpenCells {
            requested: 1,
            available: 0,
        });
    }
    let mut rng = stream_rng(seed, "route", 0);
    let w = window.width_px as isize;
    let h = window.height_px as isize;
    let dirs: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let open_at = |r: isize, c: isize| {
        r >= 0 && r < h && c >= 0 && c < w && !footprint[(r * w + c) as usize]
    };
    let mut cell = *open.choose(&mut rng).unwrap();
    let mut heading = dirs[rng.gen_range(0..4)];
    let mut route = Vec::with_capacity(n_points);
    route.push(cell);
    while route.len() < n_points {
        let row = cell as isize / w;
        let col = cell as isize % w;
        if rng.gen_bool(0.05) {
            // New sweep elsewhere on the map.
            cell = *open.choose(&mut rng).unwrap();
            heading = dirs[rng.gen_range(0..4)];
            route.push(cell);
            continue;
        }
        let keep = rng.gen_bool(0.9) && open_at(row + heading.0, col + heading.1);
        if !keep {
            let mut choices: Vec<(isize, isize)> = dirs
                .iter()
                .copied()
                .filter(|d| open_at(row + d.0, col + d.1))
                .collect();
            match choices.len() {
                0 => {
                    cell = *open.choose(&mut rng).unwrap();
                    heading = dirs[rng.gen_range(0..4)];
                    route.push(cell);
                    continue;
                }
                _ => {
                    choices.sort_unstable();
                    heading = *choices.choose(&mut rng).unwrap();
                }
            }
        }
        cell = ((row + heading.0) * w + (col + heading.1)) as usize;
        route.push(cell);
    }
    Ok(route)
}

/// Synthesizes a field campaign: trace the scene with a perturbed reflection
/// coefficient, add a global bias and spatially correlated noise, and sample
/// the result along a random-walk route. Deterministic per seed.
pub fn synth_reality(
    window: &ElevationGrid,
    tx: &TxLocation,
    prop: &PropagationConfig,
    pert: &Perturbation,
    n_points: usize,
    seed: u64,
    scene_id: &str,
) -> Result<MeasurementSet> {
    pert.validate()?;
    if n_points == 0 {
        return Err(CoreError::invalid("n_points must be at least 1"));
    }
    let mut perturbed = prop.clone();
    perturbed.material.reflection_coeff += pert.gamma_offset;
    let g = perturbed.material.reflection_coeff;
    if !(g > 0.0 && g < 1.0) {
        return Err(CoreError::invalid(format!(
            "perturbed reflection coefficient {g} outside (0, 1)"
        )));
    }
    let map = compute_radio_map(window, tx, &perturbed)?;
    let noise: Option<Vec<f64>> = if pert.noise_sigma_db > 0.0 {
        Some(correlated_noise_field(
            window.width_px,
            window.height_px,
            pert.correlation_cells,
            seed,
        ))
    } else {
        None
    };
    let route = measurement_route(window, n_points, seed)?;
    let points = route
        .iter()
        .map(|&cell| {
            let mut db = map.gains_db[cell] + pert.bias_db;
            if let Some(n) = &noise {
                db += pert.noise_sigma_db * n[cell];
            }
            let row = cell / window.width_px;
            let col = cell % window.width_px;
            MeasurementPoint {
                x_m: window.origin_x_m + (col as f64 + 0.5) * window.resolution_m,
                y_m: window.origin_y_m + (row as f64 + 0.5) * window.resolution_m,
                path_gain_db: db.clamp(GAIN_FLOOR_DB, GAIN_CEIL_DB),
            }
        })
        .collect();
    Ok(MeasurementSet {
        points,
        scene_id: scene_id.to_string(),
        provenance: Provenance::SyntheticReality,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementSidecar {
    scene_id: String,
    provenance: Provenance,
    seed: u64,
}

/// Writes `{base}.csv` (x_m, y_m, path_gain_db) and a `{base}.json` sidecar.
pub fn save_measurements(base: &Path, set: &MeasurementSet, seed: u64) -> Result<()> {
    set.validate()?;
    let rows: Vec<Vec<String>> = set
        .points
        .iter()
        .map(|p| vec![fmt_f64(p.x_m), fmt_f64(p.y_m), fmt_f64(p.path_gain_db)])
        .collect();
    write_csv(base.with_extension("csv"), &["x_m", "y_m", "path_gain_db"], &rows)?;
    let sidecar = MeasurementSidecar {
        scene_id: set.scene_id.clone(),
        provenance: set.provenance,
        seed,
    };
    let jpath = base.with_extension("json");
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CoreError::Numeric(format!("sidecar serialization: {e}")))?;
    std::fs::write(&jpath, text + "\n").map_err(|e| CoreError::io(&jpath, e))
}

/// Loads a measurement set saved by [`save_measurements`]; returns the set
/// and the sidecar seed.
pub fn load_measurements(base: &Path) -> Result<(MeasurementSet, u64)> {
    let jpath = base.with_extension("json");
    let text = std::fs::read_to_string(&jpath).map_err(|e| CoreError::io(&jpath, e))?;
    let sidecar: MeasurementSidecar = serde_json::from_str(&text).map_err(|e| {
        CoreError::MalformedArtifact {
            path: jpath.clone(),
            reason: e.to_string(),
        }
    })?;
    let cpath = base.with_extension("csv");
    let body = std::fs::read_to_string(&cpath).map_err(|e| CoreError::io(&cpath, e))?;
    let malformed = |reason: String| CoreError::MalformedArtifact {
        path: cpath.clone(),
        reason,
    };
    let mut lines = body.lines();
    match lines.next() {
        Some("x_m,y_m,path_gain_db") => {}
        other => return Err(malformed(format!("unexpected header {other:?}"))),
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields
                .next()
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| malformed(format!("row {i}: bad {name}")))
        };
        points.push(MeasurementPoint {
            x_m: field("x_m")?,
            y_m: field("y_m")?,
            path_gain_db: field("path_gain_db")?,
        });
    }
    let set = MeasurementSet {
        points,
        scene_id: sidecar.scene_id.clone(),
        provenance: sidecar.provenance,
    };
    set.validate()?;
    Ok((set, sidecar.seed))
}

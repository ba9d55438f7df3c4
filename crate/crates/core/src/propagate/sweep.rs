//! Fidelity sweep and material-misconfiguration harnesses.

use std::path::Path;
use std::time::Instant;

use super::map::compute_radio_map;
use super::{Material, PropagationConfig, MAX_REFLECTION_DEPTH};
use crate::error::CoreError;
use crate::raster::{ElevationGrid, TxLocation};
use crate::stats::{fmt_f64, mean_ci95, write_csv, Ecdf};
use crate::Result;

/// One ray-tracing configuration measured against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub max_depth: u32,
    pub diffraction: bool,
    /// RMSE in dB against the depth-20 + diffraction reference, averaged
    /// over scenes.
    pub rmse_db_mean: f64,
    /// Half-width of the normal-approximation 95% interval over scenes.
    pub rmse_db_ci95: f64,
    /// Total wall clock across scenes, excluding scene construction.
    pub runtime_s: f64,
    pub per_scene_rmse_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Rows ordered by (max_depth, diffraction off before on).
    pub rows: Vec<SweepRow>,
    pub n_scenes: usize,
}

impl SweepReport {
    /// Deterministic results table: one row per configuration.
    pub fn write_rmse_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.max_depth.to_string(),
                    r.diffraction.to_string(),
                    fmt_f64(r.rmse_db_mean),
                    fmt_f64(r.rmse_db_ci95),
                ]
            })
            .collect();
        write_csv(
            path,
            &["max_depth", "diffraction", "rmse_db_mean", "rmse_db_ci95"],
            &rows,
        )
    }

    /// Wall-clock table, kept separate so the results table stays
    /// byte-reproducible across runs.
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.max_depth.to_string(),
                    r.diffraction.to_string(),
                    fmt_f64(r.runtime_s),
                ]
            })
            .collect();
        write_csv(path, &["max_depth", "diffraction", "runtime_s"], &rows)
    }
}

fn scene_rmse(a: &[f64], b: &[f64], open: &[bool]) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for i in 0..a.len() {
        if open[i] {
            let d = a[i] - b[i];
            sum += d * d;
            n += 1;
        }
    }
    (sum / n as f64).sqrt()
}

/// Measure RMSE-vs-runtime for each (depth, diffraction) configuration
/// against the depth-20 + diffraction reference on the same scenes. Scene
/// construction is excluded from the timing; each configuration is computed
/// from scratch so its runtime is honest.
pub fn fidelity_sweep(
    scenes: &[(ElevationGrid, TxLocation)],
    depths: &[u32],
    cfg: &PropagationConfig,
) -> Result<SweepReport> {
    if scenes.is_empty() {
        return Err(CoreError::invalid("fidelity sweep needs at least one scene"));
    }
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::invalid(
            "depths must be non-empty and strictly ascending",
        ));
    }
    cfg.validate()?;

    let reference_cfg = PropagationConfig {
        max_depth: MAX_REFLECTION_DEPTH,
        diffraction_enabled: true,
        ..cfg.clone()
    };
    let mut references = Vec::with_capacity(scenes.len());
    let mut masks = Vec::with_capacity(scenes.len());
    for (grid, tx) in scenes {
        references.push(compute_radio_map(grid, tx, &reference_cfg)?.gains_db);
        masks.push(grid.footprint_mask().iter().map(|&f| !f).collect::<Vec<bool>>());
    }

    let mut rows = Vec::new();
    for &depth in depths {
        for diffraction in [false, true] {
            let run_cfg = PropagationConfig {
                max_depth: depth,
                diffraction_enabled: diffraction,
                ..cfg.clone()
            };
            let mut per_scene = Vec::with_capacity(scenes.len());
            let mut runtime_s = 0.0f64;
            for (i, (grid, tx)) in scenes.iter().enumerate() {
                let t0 = Instant::now();
                let map = compute_radio_map(grid, tx, &run_cfg)?;
                runtime_s += t0.elapsed().as_secs_f64();
                per_scene.push(scene_rmse(&map.gains_db, &references[i], &masks[i]));
            }
            let (mean, ci) = mean_ci95(&per_scene);
            rows.push(SweepRow {
                max_depth: depth,
                diffraction,
                rmse_db_mean: mean,
                rmse_db_ci95: ci,
                runtime_s,
                per_scene_rmse_db: per_scene,
            });
        }
    }
    Ok(SweepReport {
        rows,
        n_scenes: scenes.len(),
    })
}

/// Pooled per-cell path-gain error when the tracer assumes the wrong
/// material.
#[derive(Debug, Clone)]
pub struct MisconfigReport {
    /// ECDF of |gain(true material) - gain(assumed material)| in dB over all
    /// non-footprint cells of all scenes.
    pub ecdf: Ecdf,
    /// True when every pooled error is identical (e.g. identical materials).
    pub degenerate: bool,
}

impl MisconfigReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::stats::write_ecdf_csv(path, &[("path_gain_db", &self.ecdf)])
    }
}

pub fn misconfig_study(
    scenes: &[(ElevationGrid, TxLocation)],
    true_material: &Material,
    assumed_material: &Material,
    cfg: &PropagationConfig,
) -> Result<MisconfigReport> {
    if scenes.is_empty() {
        return Err(CoreError::invalid("misconfig study needs at least one scene"));
    }
    let true_cfg = PropagationConfig {
        material: true_material.clone(),
        ..cfg.clone()
    };
    let assumed_cfg = PropagationConfig {
        material: assumed_material.clone(),
        ..cfg.clone()
    };
    true_cfg.validate()?;
    assumed_cfg.validate()?;

    let mut errors = Vec::new();
    for (grid, tx) in scenes {
        let truth = compute_radio_map(grid, tx, &true_cfg)?;
        let assumed = compute_radio_map(grid, tx, &assumed_cfg)?;
        let open = grid.footprint_mask();
        for i in 0..truth.gains_db.len() {
            if !open[i] {
                errors.push((truth.gains_db[i] - assumed.gains_db[i]).abs());
            }
        }
    }
    let ecdf = Ecdf::new(errors)?;
    let degenerate = ecdf.is_degenerate();
    Ok(MisconfigReport { ecdf, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Street canyon: two solid building rows flanking three open rows.
    fn canyon() -> (ElevationGrid, TxLocation) {
        let mut heights = vec![0.0f32; 5 * 21];
        for c in 0..21 {
            heights[c] = 30.0;
            heights[4 * 21 + c] = 30.0;
        }
        let g = ElevationGrid::new(21, 5, 10.0, 0.0, 0.0, heights).unwrap();
        let (x, y) = g.cell_center_m(2, 2);
        (
            g,
            TxLocation {
                x_m: x,
                y_m: y,
                height_m: 10.0,
            },
        )
    }

    #[test]
    fn reference_config_row_has_zero_rmse() {
        let scenes = vec![canyon()];
        let cfg = PropagationConfig::default();
        let report = fidelity_sweep(&scenes, &[5, 20], &cfg).unwrap();
        assert_eq!(report.rows.len(), 4);
        let last = &report.rows[3];
        assert_eq!((last.max_depth, last.diffraction), (20, true));
        assert_eq!(last.rmse_db_mean, 0.0);
        assert_eq!(last.per_scene_rmse_db, vec![0.0]);
    }

    #[test]
    fn rmse_never_increases_with_depth() {
        let scenes = vec![canyon()];
        let cfg = PropagationConfig::default();
        let report = fidelity_sweep(&scenes, &[1, 2, 5, 10], &cfg).unwrap();
        for diffraction in [false, true] {
            let series: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.diffraction == diffraction)
                .map(|r| r.per_scene_rmse_db[0])
                .collect();
            for pair in series.windows(2) {
                assert!(pair[1] <= pair[0], "series {series:?}");
            }
        }
    }

    #[test]
    fn identical_materials_are_degenerate_at_zero() {
        let scenes = vec![canyon()];
        let cfg = PropagationConfig::default();
        let m = Material::concrete();
        let report = misconfig_study(&scenes, &m, &m, &cfg).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.ecdf.median(), 0.0);
    }

    #[test]
    fn larger_material_gap_gives_larger_median_error() {
        let scenes = vec![canyon()];
        let cfg = PropagationConfig::default();
        let truth = Material::concrete();
        let near = Material {
            name: "near".into(),
            reflection_coeff: 0.4,
        };
        let far = Material {
            name: "far".into(),
            reflection_coeff: 0.2,
        };
        let small = misconfig_study(&scenes, &truth, &near, &cfg).unwrap();
        let large = misconfig_study(&scenes, &truth, &far, &cfg).unwrap();
        assert!(large.ecdf.median() > small.ecdf.median());
    }

    #[test]
    fn empty_scene_list_is_an_error() {
        let cfg = PropagationConfig::default();
        assert!(fidelity_sweep(&[], &[1], &cfg).is_err());
        let m = Material::concrete();
        assert!(misconfig_study(&[], &m, &m, &cfg).is_err());
    }
}

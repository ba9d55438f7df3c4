//! Radio map assembly over all receiver cells.

use rayon::prelude::*;

use super::trace::TraceScene;
use super::walls::inner_walls;
use super::{path_gain_from_cir, path_gain_from_cir_raw, ChannelImpulseResponse};
use super::{PropagationConfig, GAIN_CEIL_DB, GAIN_FLOOR_DB};
use crate::error::CoreError;
use crate::raster::{ElevationGrid, TxLocation};
use crate::Result;

/// Path gain per cell for one transmitter, clamped to the display range.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub width_px: usize,
    pub height_px: usize,
    pub resolution_m: f64,
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    /// Row-major path gain in dB, in [-150, -50]; -150 inside footprints,
    /// -50 at the transmitter cell.
    pub gains_db: Vec<f64>,
    /// Transmitter snapped to its cell center.
    pub tx: TxLocation,
}

impl RadioMap {
    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height_px && col < self.width_px);
        row * self.width_px + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.gains_db[self.idx(row, col)]
    }

    /// Cell indices of the transmitter.
    pub fn tx_cell(&self) -> (usize, usize) {
        let c = ((self.tx.x_m - self.origin_x_m) / self.resolution_m).floor() as usize;
        let r = ((self.tx.y_m - self.origin_y_m) / self.resolution_m).floor() as usize;
        (r, c)
    }
}

fn validated_site(grid: &ElevationGrid, tx: &TxLocation) -> Result<(usize, usize)> {
    if !(tx.height_m > 0.0) || !tx.height_m.is_finite() {
        return Err(CoreError::invalid("tx antenna height must be positive"));
    }
    let (r, c) = grid
        .cell_of(tx.x_m, tx.y_m)
        .ok_or_else(|| CoreError::invalid("transmitter lies outside the grid"))?;
    Ok((r, c))
}

fn per_cell_gains(
    grid: &ElevationGrid,
    tx: &TxLocation,
    cfg: &PropagationConfig,
    gain_of: impl Fn(&ChannelImpulseResponse) -> f64 + Sync,
    footprint_db: f64,
    tx_cell_db: Option<f64>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (tx_r, tx_c) = validated_site(grid, tx)?;
    let footprint = grid.footprint_mask();
    if footprint[grid.idx(tx_r, tx_c)] {
        return Err(CoreError::invalid(
            "transmitter cell lies inside a building footprint",
        ));
    }
    let (tx_x, tx_y) = grid.cell_center_m(tx_r, tx_c);
    let tx_z = grid.get(tx_r, tx_c) + tx.height_m;

    let walls = inner_walls(grid);
    let scene = TraceScene::new(grid, &walls, [tx_x, tx_y, tx_z], cfg);

    let mut gains = vec![0.0f64; grid.width_px * grid.height_px];
    let width = grid.width_px;
    gains
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, slot) in out.iter_mut().enumerate() {
                let i = row * width + col;
                if footprint[i] {
                    *slot = footprint_db;
                    continue;
                }
                if (row, col) == (tx_r, tx_c) {
                    if let Some(db) = tx_cell_db {
                        *slot = db;
                        continue;
                    }
                }
                let (x, y) = grid.cell_center_m(row, col);
                let z = grid.get(row, col) + cfg.rx_height_m;
                let cir =
                    ChannelImpulseResponse::from_components(scene.components_for([x, y, z]));
                *slot = gain_of(&cir);
            }
        });
    Ok(gains)
}

/// Radio map for one transmitter: per-cell clamped path gain, with footprint
/// cells at the -150 floor and the transmitter cell pinned to the -50
/// ceiling. The transmitter is snapped to its cell center; a transmitter
/// inside a footprint is an error.
pub fn compute_radio_map(
    grid: &ElevationGrid,
    tx: &TxLocation,
    cfg: &PropagationConfig,
) -> Result<RadioMap> {
    let gains = per_cell_gains(
        grid,
        tx,
        cfg,
        path_gain_from_cir,
        GAIN_FLOOR_DB,
        Some(GAIN_CEIL_DB),
    )?;
    let (tx_r, tx_c) = grid.cell_of(tx.x_m, tx.y_m).expect("validated above");
    let (x, y) = grid.cell_center_m(tx_r, tx_c);
    Ok(RadioMap {
        width_px: grid.width_px,
        height_px: grid.height_px,
        resolution_m: grid.resolution_m,
        origin_x_m: grid.origin_x_m,
        origin_y_m: grid.origin_y_m,
        gains_db: gains,
        tx: TxLocation {
            x_m: x,
            y_m: y,
            height_m: tx.height_m,
        },
    })
}

/// Pre-clamp diagnostic variant: row-major unclamped gains, with the
/// transmitter cell computed like any other and footprint cells at negative
/// infinity.
pub fn compute_radio_map_raw(
    grid: &ElevationGrid,
    tx: &TxLocation,
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    per_cell_gains(
        grid,
        tx,
        cfg,
        path_gain_from_cir_raw,
        f64::NEG_INFINITY,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::SPEED_OF_LIGHT_M_S;

    fn flat_grid(n: usize, res: f64) -> ElevationGrid {
        ElevationGrid::new(n, n, res, 0.0, 0.0, vec![0.0; n * n]).unwrap()
    }

    fn center_tx(grid: &ElevationGrid) -> TxLocation {
        let (r, c) = (grid.height_px / 2, grid.width_px / 2);
        let (x, y) = grid.cell_center_m(r, c);
        TxLocation {
            x_m: x,
            y_m: y,
            height_m: 10.0,
        }
    }

    #[test]
    fn flat_map_matches_friis_and_rotates_onto_itself() {
        let g = flat_grid(9, 4.0);
        let tx = center_tx(&g);
        let cfg = PropagationConfig::default();
        let map = compute_radio_map(&g, &tx, &cfg).unwrap();
        let raw = compute_radio_map_raw(&g, &tx, &cfg).unwrap();

        let lambda = cfg.wavelength_m();
        for r in 0..9 {
            for c in 0..9 {
                let (x, y) = g.cell_center_m(r, c);
                let dx = x - tx.x_m;
                let dy = y - tx.y_m;
                let dz = 1.5 - 10.0;
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                let friis = 20.0 * (lambda / (4.0 * std::f64::consts::PI * d)).log10();
                assert!(
                    (raw[r * 9 + c] - friis).abs() < 1e-9,
                    "cell ({r},{c}): {} vs {friis}",
                    raw[r * 9 + c]
                );
            }
        }
        // Quarter-turn about the center permutes the map onto itself.
        let n = 8;
        for r in 0..9 {
            for c in 0..9 {
                assert_eq!(map.get(r, c).to_bits(), map.get(n - c, r).to_bits());
            }
        }
        assert_eq!(map.get(4, 4), GAIN_CEIL_DB);
    }

    #[test]
    fn delay_matches_distance() {
        let g = flat_grid(9, 4.0);
        let tx = center_tx(&g);
        let cfg = PropagationConfig::default();
        let walls = crate::propagate::extract_walls(&g);
        let (x, y) = g.cell_center_m(4, 8);
        let cir = crate::propagate::trace_paths(
            &g,
            &walls,
            [tx.x_m, tx.y_m, 10.0],
            [x, y, 1.5],
            &cfg,
        );
        assert_eq!(cir.components.len(), 1);
        let d = (16.0f64 * 16.0 + 8.5 * 8.5).sqrt();
        let delay = cir.components[0].delay_s;
        assert!((delay - d / SPEED_OF_LIGHT_M_S).abs() < 1e-18);
    }

    #[test]
    fn blocking_wall_casts_floor_shadow_without_mechanisms() {
        let mut g = ElevationGrid::new(7, 3, 10.0, 0.0, 0.0, vec![0.0; 21]).unwrap();
        for r in 0..3 {
            let i = g.idx(r, 3);
            g.heights[i] = 30.0;
        }
        let (x, y) = g.cell_center_m(1, 1);
        let tx = TxLocation {
            x_m: x,
            y_m: y,
            height_m: 10.0,
        };
        let cfg = PropagationConfig {
            max_depth: 0,
            diffraction_enabled: false,
            ..PropagationConfig::default()
        };
        let map = compute_radio_map(&g, &tx, &cfg).unwrap();
        for r in 0..3 {
            for c in 4..7 {
                assert_eq!(map.get(r, c), GAIN_FLOOR_DB, "cell ({r},{c})");
            }
        }
        // In front of the wall the direct ray still lands.
        assert!(map.get(1, 0) > GAIN_FLOOR_DB);
    }

    #[test]
    fn tx_inside_footprint_is_rejected() {
        let mut g = flat_grid(5, 10.0);
        let i = g.idx(2, 2);
        g.heights[i] = 20.0;
        let (x, y) = g.cell_center_m(2, 2);
        let tx = TxLocation {
            x_m: x,
            y_m: y,
            height_m: 10.0,
        };
        assert!(compute_radio_map(&g, &tx, &PropagationConfig::default()).is_err());
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let mut g = flat_grid(8, 5.0);
        for (r, c) in [(2, 2), (2, 3), (5, 5)] {
            let i = g.idx(r, c);
            g.heights[i] = 18.0;
        }
        let (x, y) = g.cell_center_m(6, 1);
        let tx = TxLocation {
            x_m: x,
            y_m: y,
            height_m: 10.0,
        };
        let cfg = PropagationConfig::default();
        let a = compute_radio_map(&g, &tx, &cfg).unwrap();
        let b = compute_radio_map(&g, &tx, &cfg).unwrap();
        let bits = |m: &RadioMap| -> Vec<u64> { m.gains_db.iter().map(|g| g.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
    }
}

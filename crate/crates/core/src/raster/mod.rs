//! Rasterized scene handling.
//!
//! An [`ElevationGrid`] is a square-cell, row-major height field in meters.
//! Cell `(row, col)` covers the world rectangle
//! `[origin_x + col*res, origin_x + (col+1)*res) x [origin_y + row*res, ...)`,
//! so `row` advances along +y and `col` along +x. Building footprints are the
//! cells that rise more than [`FOOTPRINT_CLEARANCE_M`] above the window's
//! minimum height.
//!
//! ## Example
//! ```
//! use radiomap_core::raster::{synth_city, CityParams};
//!
//! let city = synth_city(&CityParams::default(), 7).unwrap();
//! let open = city.footprint_mask().iter().filter(|f| !**f).count();
//! assert!(open > 0);
//! ```

mod city;
mod container;
mod crop;
mod transform;

pub use city::{synth_city, CityParams};
pub use crop::{crop_centered, crop_window, normalize_inverted, EXTENT_RANGE_M};
pub use transform::{apply_transform, transform_grid, transform_tx_cell, GeometricTransform};

use crate::error::CoreError;
use crate::Result;
use rand::Rng;

/// Cells rising more than this above the window minimum are building footprint.
pub const FOOTPRINT_CLEARANCE_M: f64 = 2.0;

/// Default transmitter antenna height above local terrain, meters.
pub const DEFAULT_TX_HEIGHT_M: f64 = 10.0;

/// Square-cell elevation raster, heights in meters, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationGrid {
    pub width_px: usize,
    pub height_px: usize,
    /// Cell side length, meters.
    pub resolution_m: f64,
    /// World x of the (row 0, col 0) cell corner, meters.
    pub origin_x_m: f64,
    /// World y of the (row 0, col 0) cell corner, meters.
    pub origin_y_m: f64,
    /// Heights, `width_px * height_px` values, row-major.
    pub heights: Vec<f32>,
}

impl ElevationGrid {
    /// Build a grid, validating shape and height finiteness/non-negativity.
    pub fn new(
        width_px: usize,
        height_px: usize,
        resolution_m: f64,
        origin_x_m: f64,
        origin_y_m: f64,
        heights: Vec<f32>,
    ) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(CoreError::invalid("grid dimensions must be positive"));
        }
        if !(resolution_m > 0.0) || !resolution_m.is_finite() {
            return Err(CoreError::invalid(format!(
                "resolution must be positive and finite, got {resolution_m}"
            )));
        }
        if heights.len() != width_px * height_px {
            return Err(CoreError::invalid(format!(
                "height payload has {} values, expected {}",
                heights.len(),
                width_px * height_px
            )));
        }
        if let Some(bad) = heights.iter().find(|h| !h.is_finite() || **h < 0.0) {
            return Err(CoreError::invalid(format!(
                "heights must be finite and non-negative, found {bad}"
            )));
        }
        Ok(ElevationGrid {
            width_px,
            height_px,
            resolution_m,
            origin_x_m,
            origin_y_m,
            heights,
        })
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width_px + col
    }

    /// Height at `(row, col)`, meters.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        f64::from(self.heights[self.idx(row, col)])
    }

    /// Minimum height over the grid; the local terrain level.
    pub fn min_height(&self) -> f64 {
        self.heights
            .iter()
            .copied()
            .fold(f64::INFINITY, |a, b| a.min(f64::from(b)))
    }

    /// World coordinates of a cell center, meters.
    pub fn cell_center_m(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x_m + (col as f64 + 0.5) * self.resolution_m,
            self.origin_y_m + (row as f64 + 0.5) * self.resolution_m,
        )
    }

    /// Cell containing a world position, if inside the grid.
    pub fn cell_of(&self, x_m: f64, y_m: f64) -> Option<(usize, usize)> {
        let c = ((x_m - self.origin_x_m) / self.resolution_m).floor();
        let r = ((y_m - self.origin_y_m) / self.resolution_m).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        if r < self.height_px && c < self.width_px {
            Some((r, c))
        } else {
            None
        }
    }

    /// Footprint flags, row-major: true where the cell exceeds the window
    /// minimum by more than [`FOOTPRINT_CLEARANCE_M`].
    pub fn footprint_mask(&self) -> Vec<bool> {
        let floor = self.min_height() + FOOTPRINT_CLEARANCE_M;
        self.heights.iter().map(|&h| f64::from(h) > floor).collect()
    }
}

/// Transmitter site: world position plus antenna height above local terrain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TxLocation {
    pub x_m: f64,
    pub y_m: f64,
    /// Antenna height above the terrain at the transmitter cell, meters.
    pub height_m: f64,
}

/// Normalized, inverted elevation image: 1 at the window minimum, 0 at the
/// maximum, so taller structures read darker. Square, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub px: usize,
    pub resolution_m: f64,
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    /// Row-major values in `[0, 1]`.
    pub values: Vec<f32>,
}

impl NormalizedImage {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.px + col]
    }

    /// Row/col index where crop placement puts the transmitter.
    pub fn tx_index(&self) -> usize {
        self.px / 2
    }
}

/// Draw `n` distinct transmitter sites uniformly over open (non-footprint)
/// cells, placed at cell centers with the given antenna height.
///
/// Fails with the number of available cells when `n` exceeds it.
pub fn sample_tx_locations(
    grid: &ElevationGrid,
    n: usize,
    tx_height_m: f64,
    rng: &mut impl Rng,
) -> Result<Vec<TxLocation>> {
    if !(tx_height_m > 0.0) {
        return Err(CoreError::invalid("tx height must be positive"));
    }
    let mask = grid.footprint_mask();
    let mut open: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
    if open.len() < n {
        return Err(CoreError::TooFewOpenCells {
            requested: n,
            available: open.len(),
        });
    }
    // Partial Fisher-Yates: the first n slots become the sample.
    for i in 0..n {
        let j = rng.gen_range(i..open.len());
        open.swap(i, j);
    }
    let mut out = Vec::with_capacity(n);
    for &cell in &open[..n] {
        let (row, col) = (cell / grid.width_px, cell % grid.width_px);
        let (x, y) = grid.cell_center_m(row, col);
        out.push(TxLocation {
            x_m: x,
            y_m: y,
            height_m: tx_height_m,
        });
    }
    Ok(out)
}

pub use container::{load_grid, load_image, save_grid, save_image, RasterHeader};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn flat(px: usize) -> ElevationGrid {
        ElevationGrid::new(px, px, 10.0, 0.0, 0.0, vec![0.0; px * px]).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ElevationGrid::new(0, 4, 1.0, 0.0, 0.0, vec![]).is_err());
        assert!(ElevationGrid::new(2, 2, 0.0, 0.0, 0.0, vec![0.0; 4]).is_err());
        assert!(ElevationGrid::new(2, 2, 1.0, 0.0, 0.0, vec![0.0; 3]).is_err());
        assert!(ElevationGrid::new(2, 2, 1.0, 0.0, 0.0, vec![0.0, 1.0, f32::NAN, 0.0]).is_err());
        assert!(ElevationGrid::new(2, 2, 1.0, 0.0, 0.0, vec![0.0, 1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn footprint_uses_window_minimum() {
        let mut g = flat(4);
        g.heights[5] = 1.9; // within clearance: still open
        g.heights[6] = 2.1; // above clearance: footprint
        let mask = g.footprint_mask();
        assert!(!mask[5]);
        assert!(mask[6]);
    }

    #[test]
    fn tx_sampling_is_distinct_open_and_deterministic() {
        let mut g = flat(8);
        for c in 0..8 {
            let i = g.idx(3, c);
            g.heights[i] = 12.0;
        }
        let mut rng = stream_rng(11, "tx", 0);
        let txs = sample_tx_locations(&g, 10, 10.0, &mut rng).unwrap();
        assert_eq!(txs.len(), 10);
        let mut cells: Vec<_> = txs
            .iter()
            .map(|t| g.cell_of(t.x_m, t.y_m).unwrap())
            .collect();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), 10, "tx cells must be distinct");
        assert!(cells.iter().all(|&(r, _)| r != 3), "tx must avoid footprint");

        let mut rng2 = stream_rng(11, "tx", 0);
        let txs2 = sample_tx_locations(&g, 10, 10.0, &mut rng2).unwrap();
        assert_eq!(txs, txs2);
    }

    #[test]
    fn tx_sampling_reports_available_count() {
        let mut g = flat(3);
        for i in 0..9 {
            g.heights[i] = 30.0;
        }
        g.heights[4] = 0.0;
        let mut rng = stream_rng(1, "tx", 0);
        match sample_tx_locations(&g, 2, 10.0, &mut rng) {
            Err(CoreError::TooFewOpenCells {
                requested,
                available,
            }) => {
                assert_eq!(requested, 2);
                assert_eq!(available, 1);
            }
            other => panic!("expected TooFewOpenCells, got {other:?}"),
        }
    }

    /// Empirical tx cell frequency over many draws stays uniform: chi-square
    /// over all open cells of an 8x8 grid, 1e5 single draws.
    #[test]
    fn tx_sampling_uniformity_chi_square() {
        let g = flat(8);
        let cells = 64usize;
        let draws = 100_000usize;
        let mut counts = vec![0u64; cells];
        for i in 0..draws {
            let mut rng = stream_rng(99, "tx-uniform", i as u64);
            let tx = sample_tx_locations(&g, 1, 10.0, &mut rng).unwrap();
            let (r, c) = g.cell_of(tx[0].x_m, tx[0].y_m).unwrap();
            counts[r * 8 + c] += 1;
        }
        let expected = draws as f64 / cells as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // df = 63; chi-square 0.99 quantile = 92.010 (statrs, frozen).
        assert!(
            chi2 < 92.010,
            "chi-square {chi2} exceeds the 99% quantile for df=63"
        );
    }
}

//! Centered cropping with resolution adaptation.
//!
//! A square window of physical side `extent_m` is cut around the transmitter
//! and resampled to `out_px` cells by max-pooling, so an obstruction can never
//! be averaged away. Cells outside the source grid are padded with the
//! window's terrain minimum, which avoids phantom walls at map edges.

use crate::error::CoreError;
use crate::raster::{ElevationGrid, NormalizedImage, TxLocation};
use crate::Result;

/// Allowed crop extents, meters.
pub const EXTENT_RANGE_M: (f64, f64) = (500.0, 3000.0);

/// Cut and max-pool a centered window, returning it as a standalone grid.
///
/// The transmitter is snapped to the center of its source cell and lands at
/// output index `(out_px/2, out_px/2)`; the returned location carries the
/// snapped position. Resolution of the result is `extent_m / out_px`.
pub fn crop_window(
    grid: &ElevationGrid,
    tx: &TxLocation,
    extent_m: f64,
    out_px: usize,
) -> Result<(ElevationGrid, TxLocation)> {
    if !(extent_m >= EXTENT_RANGE_M.0 && extent_m <= EXTENT_RANGE_M.1) {
        return Err(CoreError::invalid(format!(
            "extent {extent_m} m outside [{}, {}]",
            EXTENT_RANGE_M.0, EXTENT_RANGE_M.1
        )));
    }
    if out_px < 8 {
        return Err(CoreError::invalid("out_px must be at least 8"));
    }
    let (tr, tc) = grid
        .cell_of(tx.x_m, tx.y_m)
        .ok_or_else(|| CoreError::invalid("tx outside grid"))?;
    let (tx_x, tx_y) = grid.cell_center_m(tr, tc);

    let res_out = extent_m / out_px as f64;
    let center = out_px / 2;
    // Window origin chosen so the tx cell center is the center of cell (center, center).
    let ox = tx_x - (center as f64 + 0.5) * res_out;
    let oy = tx_y - (center as f64 + 0.5) * res_out;

    // Window minimum over in-bounds source cells (used for padding).
    let res_in = grid.resolution_m;
    let col_range = |lo: f64, hi: f64, n: usize, o: f64| -> (usize, usize) {
        let a = ((lo - o) / res_in).floor().max(0.0) as usize;
        let b = (((hi - o) / res_in).ceil() as isize).clamp(0, n as isize) as usize;
        (a.min(n), b)
    };
    let (c0, c1) = col_range(ox, ox + extent_m, grid.width_px, grid.origin_x_m);
    let (r0, r1) = col_range(oy, oy + extent_m, grid.height_px, grid.origin_y_m);
    let mut window_min = f64::INFINITY;
    for r in r0..r1 {
        for c in c0..c1 {
            window_min = window_min.min(grid.get(r, c));
        }
    }
    if !window_min.is_finite() {
        // Window entirely outside the grid cannot happen (tx is inside).
        window_min = 0.0;
    }

    let mut heights = vec![window_min as f32; out_px * out_px];
    for orow in 0..out_px {
        let y_lo = oy + orow as f64 * res_out;
        let y_hi = y_lo + res_out;
        let (rr0, rr1) = col_range(y_lo, y_hi, grid.height_px, grid.origin_y_m);
        for ocol in 0..out_px {
            let x_lo = ox + ocol as f64 * res_out;
            let x_hi = x_lo + res_out;
            let (cc0, cc1) = col_range(x_lo, x_hi, grid.width_px, grid.origin_x_m);
            let mut m = f64::NEG_INFINITY;
            for r in rr0..rr1 {
                for c in cc0..cc1 {
                    m = m.max(grid.get(r, c));
                }
            }
            if m.is_finite() {
                heights[orow * out_px + ocol] = m as f32;
            }
        }
    }

    let window = ElevationGrid::new(out_px, out_px, res_out, ox, oy, heights)?;
    let tx_out = TxLocation {
        x_m: tx_x,
        y_m: tx_y,
        height_m: tx.height_m,
    };
    Ok((window, tx_out))
}

/// Min-max normalize and invert a grid: `v = 1 - (h - min)/(max - min)`.
/// A uniform window maps to all ones.
pub fn normalize_inverted(window: &ElevationGrid) -> NormalizedImage {
    debug_assert_eq!(window.width_px, window.height_px);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &h in &window.heights {
        let h = f64::from(h);
        lo = lo.min(h);
        hi = hi.max(h);
    }
    let span = hi - lo;
    let values = if span <= 0.0 {
        vec![1.0f32; window.heights.len()]
    } else {
        window
            .heights
            .iter()
            .map(|&h| {
                let v = 1.0 - (f64::from(h) - lo) / span;
                v.clamp(0.0, 1.0) as f32
            })
            .collect()
    };
    NormalizedImage {
        px: window.width_px,
        resolution_m: window.resolution_m,
        origin_x_m: window.origin_x_m,
        origin_y_m: window.origin_y_m,
        values,
    }
}

/// Centered crop, max-pool resample, then min-max normalize and invert.
pub fn crop_centered(
    grid: &ElevationGrid,
    tx: &TxLocation,
    extent_m: f64,
    out_px: usize,
) -> Result<NormalizedImage> {
    let (window, _) = crop_window(grid, tx, extent_m, out_px)?;
    Ok(normalize_inverted(&window))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(px: usize, res: f64, f: impl Fn(usize, usize) -> f32) -> ElevationGrid {
        let mut h = vec![0.0f32; px * px];
        for r in 0..px {
            for c in 0..px {
                h[r * px + c] = f(r, c);
            }
        }
        ElevationGrid::new(px, px, res, 0.0, 0.0, h).unwrap()
    }

    fn center_tx(grid: &ElevationGrid) -> TxLocation {
        let (x, y) = grid.cell_center_m(grid.height_px / 2, grid.width_px / 2);
        TxLocation {
            x_m: x,
            y_m: y,
            height_m: 10.0,
        }
    }

    #[test]
    fn resolution_follows_extent() {
        let g = grid_with(512, 10.0, |_, _| 0.0);
        let tx = center_tx(&g);
        let img = crop_centered(&g, &tx, 500.0, 200).unwrap();
        assert_eq!(img.resolution_m, 2.5);
        let img = crop_centered(&g, &tx, 3000.0, 200).unwrap();
        assert_eq!(img.resolution_m, 15.0);
    }

    #[test]
    fn uniform_window_is_all_ones() {
        let g = grid_with(128, 10.0, |_, _| 5.0);
        let img = crop_centered(&g, &center_tx(&g), 500.0, 64).unwrap();
        assert!(img.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tx_lands_at_center_index() {
        let g = grid_with(128, 10.0, |r, c| if r == 64 && c == 64 { 40.0 } else { 0.0 });
        let tx = center_tx(&g); // cell (64, 64) holds the spike
        let img = crop_centered(&g, &tx, 640.0, 64).unwrap();
        let k = img.tx_index();
        assert_eq!(k, 32);
        // Tallest cell maps to 0 and must sit exactly at the center index.
        let min_pos = img
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(min_pos, k * 64 + k);
        assert_eq!(img.values[min_pos], 0.0);
    }

    #[test]
    fn pooling_takes_max_not_mean() {
        // Checkerboard of 0/30 at 10 m cells, pooled 2x: every output cell
        // overlaps at least one 30 m cell, so max-pooling yields 30 everywhere
        // (bilinear would give 15).
        let g = grid_with(128, 10.0, |r, c| if (r + c) % 2 == 0 { 30.0 } else { 0.0 });
        let tx = TxLocation {
            x_m: 645.0,
            y_m: 645.0,
            height_m: 10.0,
        };
        let (win, _) = crop_window(&g, &tx, 640.0, 32).unwrap();
        assert!(win.heights.iter().all(|&h| h == 30.0));
    }

    #[test]
    fn out_of_bounds_padded_with_window_minimum() {
        // Tx near the corner; the window spills off-grid. In-bounds terrain is
        // all 7 m, so padding must be 7 m, not zero.
        let g = grid_with(64, 10.0, |_, _| 7.0);
        let tx = TxLocation {
            x_m: 25.0,
            y_m: 25.0,
            height_m: 10.0,
        };
        let (win, _) = crop_window(&g, &tx, 500.0, 50).unwrap();
        assert!(win.heights.iter().all(|&h| h == 7.0));
    }

    #[test]
    fn degenerate_extent_rejected() {
        let g = grid_with(64, 10.0, |_, _| 0.0);
        let tx = center_tx(&g);
        assert!(crop_centered(&g, &tx, 0.0, 64).is_err());
        assert!(crop_centered(&g, &tx, 499.0, 64).is_err());
        assert!(crop_centered(&g, &tx, 3001.0, 64).is_err());
    }

    #[test]
    fn normalization_scaling_idempotent_inversion_involutive() {
        let g = grid_with(16, 50.0, |r, c| (r * 16 + c) as f32);
        let img1 = normalize_inverted(&g);
        // img1 already spans [0, 1], so renormalizing only flips it; two more
        // applications reproduce img1 exactly (scaling is idempotent, the
        // inversion is an involution).
        let as_grid = |v: &[f32]| ElevationGrid::new(16, 16, 50.0, 0.0, 0.0, v.to_vec()).unwrap();
        let img2 = normalize_inverted(&as_grid(&img1.values));
        let img3 = normalize_inverted(&as_grid(&img2.values));
        for ((a, b), c) in img1.values.iter().zip(&img2.values).zip(&img3.values) {
            assert!((*b - (1.0 - *a)).abs() <= 1e-6, "inversion: {b} vs {}", 1.0 - *a);
            assert!((*c - *a).abs() <= 1e-6, "double inversion: {c} vs {a}");
        }

        // Taller cells map strictly closer to 0.
        for i in 1..img1.values.len() {
            assert!(img1.values[i] < img1.values[i - 1]);
        }
    }
}

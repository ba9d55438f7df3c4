//! Synthetic Manhattan-style city generator.
//!
//! Streets form a jittered rectangular lattice at height 0; the rectangular
//! blocks between them are either empty or filled by a single building of
//! uniform height. Block fill probability is scaled so that the expected
//! building-cell fraction of the whole grid matches `building_density`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::raster::ElevationGrid;
use crate::Result;

/// Parameters for [`synth_city`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityParams {
    pub width_px: usize,
    pub height_px: usize,
    pub resolution_m: f64,
    pub street_spacing_m: f64,
    pub street_width_m: f64,
    /// Target fraction of all cells covered by buildings, in [0, 1].
    pub building_density: f64,
    pub height_min_m: f64,
    pub height_max_m: f64,
}

impl Default for CityParams {
    fn default() -> Self {
        CityParams {
            width_px: 256,
            height_px: 256,
            resolution_m: 5.0,
            street_spacing_m: 150.0,
            street_width_m: 25.0,
            building_density: 0.5,
            height_min_m: 10.0,
            height_max_m: 30.0,
        }
    }
}

impl CityParams {
    fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(CoreError::invalid("city grid dimensions must be positive"));
        }
        if !(self.resolution_m > 0.0) {
            return Err(CoreError::invalid("city resolution must be positive"));
        }
        if !(self.street_spacing_m > 0.0) || !(self.street_width_m > 0.0) {
            return Err(CoreError::invalid(
                "street spacing and width must be positive",
            ));
        }
        if self.street_width_m >= self.street_spacing_m {
            return Err(CoreError::invalid(
                "street width must be smaller than street spacing",
            ));
        }
        if !(0.0..=1.0).contains(&self.building_density) {
            return Err(CoreError::invalid(format!(
                "building density {} outside [0, 1]",
                self.building_density
            )));
        }
        if !(self.height_min_m >= 0.0)
            || !(self.height_max_m >= self.height_min_m)
            || !self.height_max_m.is_finite()
        {
            return Err(CoreError::invalid(format!(
                "building height range [{}, {}] is invalid",
                self.height_min_m, self.height_max_m
            )));
        }
        Ok(())
    }
}

/// Street center lines along one axis, jittered around a regular lattice.
fn street_centers(extent_m: f64, spacing_m: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let jitter = 0.2 * spacing_m;
    let mut centers = Vec::new();
    let mut k = 1usize;
    while (k as f64) * spacing_m < extent_m {
        let base = (k as f64) * spacing_m;
        centers.push(base + rng.gen_range(-jitter..=jitter));
        k += 1;
    }
    centers.sort_by(f64::total_cmp);
    centers
}

/// `is_street[i]` for each cell index along one axis.
fn street_mask(n: usize, resolution_m: f64, centers: &[f64], half_width_m: f64) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &s in centers {
        let lo = s - half_width_m;
        let hi = s + half_width_m;
        for (i, m) in mask.iter_mut().enumerate() {
            let center = (i as f64 + 0.5) * resolution_m;
            if center >= lo && center < hi {
                *m = true;
            }
        }
    }
    mask
}

/// Maximal runs of non-street indices: (start, len) pairs.
fn segments(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut start = None;
    for (i, &street) in mask.iter().enumerate() {
        match (street, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                segs.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segs.push((s, mask.len() - s));
    }
    segs
}

/// Generate a synthetic city elevation grid. Deterministic given `seed`.
///
/// Draw order: vertical street jitter, horizontal street jitter, then one
/// (fill flag, height) pair per block in row-major block order.
pub fn synth_city(params: &CityParams, seed: u64) -> Result<ElevationGrid> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let extent_x = params.width_px as f64 * params.resolution_m;
    let extent_y = params.height_px as f64 * params.resolution_m;
    let vertical = street_centers(extent_x, params.street_spacing_m, &mut rng);
    let horizontal = street_centers(extent_y, params.street_spacing_m, &mut rng);

    let half_w = 0.5 * params.street_width_m;
    let col_street = street_mask(params.width_px, params.resolution_m, &vertical, half_w);
    let row_street = street_mask(params.height_px, params.resolution_m, &horizontal, half_w);
    let col_segs = segments(&col_street);
    let row_segs = segments(&row_street);

    let total_cells = (params.width_px * params.height_px) as f64;
    let open_rows: usize = row_segs.iter().map(|&(_, h)| h).sum();
    let open_cols: usize = col_segs.iter().map(|&(_, w)| w).sum();
    let block_fraction = (open_rows * open_cols) as f64 / total_cells;

    let fill_p = if params.building_density == 0.0 || block_fraction == 0.0 {
        0.0
    } else {
        (params.building_density / block_fraction).min(1.0)
    };

    let mut heights = vec![0.0f32; params.width_px * params.height_px];
    for &(r0, rh) in &row_segs {
        for &(c0, cw) in &col_segs {
            let filled = rng.gen::<f64>() < fill_p;
            let h = rng.gen_range(params.height_min_m..=params.height_max_m);
            if filled && h > 0.0 {
                for r in r0..r0 + rh {
                    for c in c0..c0 + cw {
                        heights[r * params.width_px + c] = h as f32;
                    }
                }
            }
        }
    }

    ElevationGrid::new(
        params.width_px,
        params.height_px,
        params.resolution_m,
        0.0,
        0.0,
        heights,
    )
}

//! Geometric augmentation transforms.
//!
//! Six elements of the square's dihedral group: identity, quarter-turn
//! rotations, and the axis flips. `rot90` rotates a quarter turn
//! counterclockwise with row 0 drawn at the top; `flip_h` mirrors columns,
//! `flip_v` mirrors rows. All act as pure pixel permutations.

use serde::{Deserialize, Serialize};

use crate::raster::{ElevationGrid, NormalizedImage, TxLocation};

/// One of the six augmentation transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricTransform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

impl GeometricTransform {
    /// All six transforms, identity first; the dataset variant order.
    pub const ALL: [GeometricTransform; 6] = [
        GeometricTransform::Identity,
        GeometricTransform::Rot90,
        GeometricTransform::Rot180,
        GeometricTransform::Rot270,
        GeometricTransform::FlipH,
        GeometricTransform::FlipV,
    ];

    /// Stable identifier used in manifests and file names.
    pub fn id(self) -> &'static str {
        match self {
            GeometricTransform::Identity => "identity",
            GeometricTransform::Rot90 => "rot90",
            GeometricTransform::Rot180 => "rot180",
            GeometricTransform::Rot270 => "rot270",
            GeometricTransform::FlipH => "flip_h",
            GeometricTransform::FlipV => "flip_v",
        }
    }

    /// Where input cell `(r, c)` lands in the output.
    #[inline]
    pub fn map_index(self, px: usize, r: usize, c: usize) -> (usize, usize) {
        let n = px - 1;
        match self {
            GeometricTransform::Identity => (r, c),
            GeometricTransform::Rot90 => (n - c, r),
            GeometricTransform::Rot180 => (n - r, n - c),
            GeometricTransform::Rot270 => (c, n - r),
            GeometricTransform::FlipH => (r, n - c),
            GeometricTransform::FlipV => (n - r, c),
        }
    }

    /// Inverse element within the set.
    pub fn inverse(self) -> GeometricTransform {
        match self {
            GeometricTransform::Rot90 => GeometricTransform::Rot270,
            GeometricTransform::Rot270 => GeometricTransform::Rot90,
            other => other,
        }
    }

    /// Apply to a row-major square slice.
    pub fn apply_values<T: Copy + Default>(self, px: usize, values: &[T]) -> Vec<T> {
        assert_eq!(values.len(), px * px, "transform input must be square");
        let mut out = vec![T::default(); values.len()];
        for r in 0..px {
            for c in 0..px {
                let (tr, tc) = self.map_index(px, r, c);
                out[tr * px + tc] = values[r * px + c];
            }
        }
        out
    }
}

/// Transform a normalized image (pixel permutation; georeferencing kept).
pub fn apply_transform(img: &NormalizedImage, t: GeometricTransform) -> NormalizedImage {
    NormalizedImage {
        px: img.px,
        resolution_m: img.resolution_m,
        origin_x_m: img.origin_x_m,
        origin_y_m: img.origin_y_m,
        values: t.apply_values(img.px, &img.values),
    }
}

/// Transform a square elevation grid in place of its own frame.
pub fn transform_grid(grid: &ElevationGrid, t: GeometricTransform) -> ElevationGrid {
    assert_eq!(
        grid.width_px, grid.height_px,
        "grid transforms require square grids"
    );
    ElevationGrid {
        width_px: grid.width_px,
        height_px: grid.height_px,
        resolution_m: grid.resolution_m,
        origin_x_m: grid.origin_x_m,
        origin_y_m: grid.origin_y_m,
        heights: t.apply_values(grid.width_px, &grid.heights),
    }
}

/// Transform a transmitter that sits on a cell center of `grid`: its cell
/// index is permuted and the position recomputed from the new center, which
/// keeps the mapping exact in floating point.
pub fn transform_tx_cell(grid: &ElevationGrid, tx: &TxLocation, t: GeometricTransform) -> TxLocation {
    let (r, c) = grid
        .cell_of(tx.x_m, tx.y_m)
        .expect("tx must lie inside the grid");
    let (tr, tc) = t.map_index(grid.width_px, r, c);
    let (x, y) = grid.cell_center_m(tr, tc);
    TxLocation {
        x_m: x,
        y_m: y,
        height_m: tx.height_m,
    }
}

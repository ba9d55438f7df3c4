//! Wall extraction from rasterized elevation.
//!
//! A wall exists wherever two adjacent cells differ in height; it lies on
//! the shared cell boundary, its top is the taller height, and its front
//! (reflective) side faces the lower cell. Contiguous collinear pieces with
//! equal top and front merge into one segment. The outer grid boundary has
//! no walls: nothing outside the grid reflects.

use super::geometry::{Axis, Frame};
use crate::error::CoreError;
use crate::raster::ElevationGrid;
use crate::Result;

/// Axis-aligned reflective wall on a cell boundary, in meters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WallSegment {
    pub start_m: (f64, f64),
    pub end_m: (f64, f64),
    pub top_height_m: f64,
    /// Unit vector pointing from the wall into the open (lower) side.
    pub normal: (f64, f64),
}

/// Internal wall in doubled-lattice units: the line `axis = coord` over the
/// interval [lo, hi] along the other axis; all three are even integers.
/// `front` is the sign of the open side along the wall axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct InnerWall {
    pub axis: Axis,
    pub coord: f64,
    pub lo: f64,
    pub hi: f64,
    pub top_m: f64,
    pub front: f64,
}

/// Extract merged walls in doubled units, canonically ordered.
pub(crate) fn inner_walls(grid: &ElevationGrid) -> Vec<InnerWall> {
    let w = grid.width_px;
    let h = grid.height_px;
    let mut raw: Vec<InnerWall> = Vec::new();

    for r in 0..h {
        for c in 0..w.saturating_sub(1) {
            let a = grid.get(r, c);
            let b = grid.get(r, c + 1);
            if a != b {
                raw.push(InnerWall {
                    axis: Axis::U,
                    coord: 2.0 * (c + 1) as f64,
                    lo: 2.0 * r as f64,
                    hi: 2.0 * (r + 1) as f64,
                    top_m: a.max(b),
                    front: if a < b { -1.0 } else { 1.0 },
                });
            }
        }
    }
    for r in 0..h.saturating_sub(1) {
        for c in 0..w {
            let a = grid.get(r, c);
            let b = grid.get(r + 1, c);
            if a != b {
                raw.push(InnerWall {
                    axis: Axis::V,
                    coord: 2.0 * (r + 1) as f64,
                    lo: 2.0 * c as f64,
                    hi: 2.0 * (c + 1) as f64,
                    top_m: a.max(b),
                    front: if a < b { -1.0 } else { 1.0 },
                });
            }
        }
    }

    raw.sort_by(|x, y| {
        let key = |ww: &InnerWall| {
            (
                matches!(ww.axis, Axis::V) as u8,
                ww.coord.to_bits(),
                ww.lo.to_bits(),
            )
        };
        key(x).cmp(&key(y))
    });

    let mut merged: Vec<InnerWall> = Vec::new();
    for wall in raw {
        if let Some(last) = merged.last_mut() {
            if last.axis == wall.axis
                && last.coord == wall.coord
                && last.hi == wall.lo
                && last.top_m == wall.top_m
                && last.front == wall.front
            {
                last.hi = wall.hi;
                continue;
            }
        }
        merged.push(wall);
    }
    merged
}

pub(crate) fn to_segment(frame: &Frame, w: &InnerWall) -> WallSegment {
    let (start, end, normal) = match w.axis {
        Axis::U => {
            let x = frame.origin_x_m + w.coord * frame.unit_m;
            (
                (x, frame.origin_y_m + w.lo * frame.unit_m),
                (x, frame.origin_y_m + w.hi * frame.unit_m),
                (w.front, 0.0),
            )
        }
        Axis::V => {
            let y = frame.origin_y_m + w.coord * frame.unit_m;
            (
                (frame.origin_x_m + w.lo * frame.unit_m, y),
                (frame.origin_x_m + w.hi * frame.unit_m, y),
                (0.0, w.front),
            )
        }
    };
    WallSegment {
        start_m: start,
        end_m: end,
        top_height_m: w.top_m,
        normal,
    }
}

/// Reflective wall segments of a scene, in meters, canonically ordered.
pub fn extract_walls(grid: &ElevationGrid) -> Vec<WallSegment> {
    let frame = Frame::of(grid);
    inner_walls(grid).iter().map(|w| to_segment(&frame, w)).collect()
}

/// Snap a meters coordinate to the even lattice; walls sit on cell
/// boundaries, so anything further than a hair off is a caller error.
fn snap_even(units: f64, what: &str) -> Result<f64> {
    let snapped = units.round();
    if !units.is_finite() || (units - snapped).abs() > 1e-6 {
        return Err(CoreError::invalid(format!(
            "wall {what} does not lie on a cell boundary"
        )));
    }
    if (snapped as i64) % 2 != 0 {
        return Err(CoreError::invalid(format!(
            "wall {what} lies on a cell center line, not a boundary"
        )));
    }
    Ok(snapped)
}

/// Validate caller-supplied wall segments and convert to doubled units.
pub(crate) fn to_inner(frame: &Frame, walls: &[WallSegment]) -> Result<Vec<InnerWall>> {
    let mut out = Vec::with_capacity(walls.len());
    for seg in walls {
        let (su, sv) = frame.to_units(seg.start_m.0, seg.start_m.1);
        let (eu, ev) = frame.to_units(seg.end_m.0, seg.end_m.1);
        if !seg.top_height_m.is_finite() {
            return Err(CoreError::invalid("wall top height must be finite"));
        }
        let (axis, coord, a, b) = if su == eu && sv != ev {
            (Axis::U, snap_even(su, "line")?, snap_even(sv, "endpoint")?, snap_even(ev, "endpoint")?)
        } else if sv == ev && su != eu {
            (Axis::V, snap_even(sv, "line")?, snap_even(su, "endpoint")?, snap_even(eu, "endpoint")?)
        } else {
            return Err(CoreError::invalid(
                "wall segment must be axis-aligned with distinct endpoints",
            ));
        };
        let expected = match axis {
            Axis::U => (seg.normal.0.abs() == 1.0) && seg.normal.1 == 0.0,
            Axis::V => seg.normal.0 == 0.0 && (seg.normal.1.abs() == 1.0),
        };
        if !expected {
            return Err(CoreError::invalid(
                "wall normal must be a unit vector perpendicular to the segment",
            ));
        }
        let front = match axis {
            Axis::U => seg.normal.0,
            Axis::V => seg.normal.1,
        };
        out.push(InnerWall {
            axis,
            coord,
            lo: a.min(b),
            hi: a.max(b),
            top_m: seg.top_height_m,
            front,
        });
    }
    Ok(out)
}

//! Doubled-lattice primitives shared by the tracing engine.
//!
//! Positions are expressed in "units" of half a cell: cell (r, c) spans
//! u in [2c, 2c+2] by v in [2r, 2r+2], its center sits at the odd point
//! (2c+1, 2r+1), and cell boundaries (wall lines) lie on even coordinates.
//! With cell-centered endpoints every coordinate is an integer-valued f64,
//! so sums, differences, and products below 2^53 are exact and geometric
//! predicates decide without rounding.

use crate::raster::ElevationGrid;

/// Conversion between meters and doubled-lattice units.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    /// Meters per unit: half the cell resolution.
    pub unit_m: f64,
}

impl Frame {
    pub fn of(grid: &ElevationGrid) -> Frame {
        Frame {
            origin_x_m: grid.origin_x_m,
            origin_y_m: grid.origin_y_m,
            unit_m: 0.5 * grid.resolution_m,
        }
    }

    pub fn to_units(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        (
            (x_m - self.origin_x_m) / self.unit_m,
            (y_m - self.origin_y_m) / self.unit_m,
        )
    }
}

/// Axis of an axis-aligned lattice line: `U` lines fix the u coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis {
    U,
    V,
}

/// Map composed of axis reflections: (u, v) -> (su*u + ou, sv*v + ov) with
/// su, sv = +-1 and offsets that are even integers, so cells map onto cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Affine {
    pub su: f64,
    pub ou: f64,
    pub sv: f64,
    pub ov: f64,
}

impl Affine {
    pub fn identity() -> Affine {
        Affine {
            su: 1.0,
            ou: 0.0,
            sv: 1.0,
            ov: 0.0,
        }
    }

    /// Compose a reflection across `axis = coord` after `self`.
    pub fn reflected(&self, axis: Axis, coord: f64) -> Affine {
        match axis {
            Axis::U => Affine {
                su: -self.su,
                ou: 2.0 * coord - self.ou,
                sv: self.sv,
                ov: self.ov,
            },
            Axis::V => Affine {
                su: self.su,
                ou: self.ou,
                sv: -self.sv,
                ov: 2.0 * coord - self.ov,
            },
        }
    }

    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        (self.su * u + self.ou, self.sv * v + self.ov)
    }

    /// Map a cell index of the image lattice back to the source lattice.
    pub fn cell_back(&self, cu: i64, rv: i64) -> (i64, i64) {
        let half_ou = (0.5 * self.ou) as i64;
        let half_ov = (0.5 * self.ov) as i64;
        let c = if self.su > 0.0 {
            cu - half_ou
        } else {
            half_ou - cu - 1
        };
        let r = if self.sv > 0.0 {
            rv - half_ov
        } else {
            half_ov - rv - 1
        };
        (c, r)
    }
}

/// 2D cross product; exact for integer-valued f64 inputs whose products stay
/// below 2^53.
#[inline]
pub(crate) fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Visit every cell crossed by the segment (u0,v0)->(u1,v1), in order, as
/// (col, row, t_enter, t_exit) with t the segment parameter in [0, 1].
/// A crossing exactly through a lattice corner steps diagonally: the two
/// cells touched only at that corner are not visited. The walk is unbounded;
/// callers clip cell indices to their own domain. Returns false if the
/// visitor aborted the walk.
pub(crate) fn walk_cells(
    u0: f64,
    v0: f64,
    u1: f64,
    v1: f64,
    mut visit: impl FnMut(i64, i64, f64, f64) -> bool,
) -> bool {
    let du = u1 - u0;
    let dv = v1 - v0;
    let mut cu = (0.5 * u0).floor() as i64;
    let mut rv = (0.5 * v0).floor() as i64;

    let step_u: i64 = if du > 0.0 {
        1
    } else if du < 0.0 {
        -1
    } else {
        0
    };
    let step_v: i64 = if dv > 0.0 {
        1
    } else if dv < 0.0 {
        -1
    } else {
        0
    };

    // Parameter of the next boundary crossing along one axis. Division keeps
    // mathematically equal crossings bitwise equal, so corner hits are
    // detected exactly.
    let next_t = |cell: i64, step: i64, p0: f64, dp: f64| -> f64 {
        if step > 0 {
            (2.0 * (cell + 1) as f64 - p0) / dp
        } else if step < 0 {
            (2.0 * cell as f64 - p0) / dp
        } else {
            f64::INFINITY
        }
    };

    let mut t_u = next_t(cu, step_u, u0, du);
    let mut t_v = next_t(rv, step_v, v0, dv);
    let mut t_enter = 0.0f64;

    loop {
        let t_cross = t_u.min(t_v);
        let t_exit = t_cross.min(1.0);
        if !visit(cu, rv, t_enter, t_exit) {
            return false;
        }
        if t_cross >= 1.0 {
            return true;
        }
        if t_u == t_v {
            cu += step_u;
            rv += step_v;
            t_u = next_t(cu, step_u, u0, du);
            t_v = next_t(rv, step_v, v0, dv);
        } else if t_u < t_v {
            cu += step_u;
            t_u = next_t(cu, step_u, u0, du);
        } else {
            rv += step_v;
            t_v = next_t(rv, step_v, v0, dv);
        }
        t_enter = t_cross;
    }
}

/// Height profile entry for a cell that obstructs a direct ray.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Obstruction {
    pub t_enter: f64,
    pub t_exit: f64,
    pub height_m: f64,
}

/// True when every crossed cell stays strictly below the interpolated ray.
/// Cells outside the grid (reachable only by degenerate boundary touches)
/// are treated as clear.
pub(crate) fn segment_clear(
    grid: &ElevationGrid,
    u0: f64,
    v0: f64,
    z0: f64,
    u1: f64,
    v1: f64,
    z1: f64,
) -> bool {
    let dz = z1 - z0;
    walk_cells(u0, v0, u1, v1, |c, r, ti, to| {
        if c < 0 || r < 0 || c >= grid.width_px as i64 || r >= grid.height_px as i64 {
            return true;
        }
        let h = grid.get(r as usize, c as usize);
        let z_min = (z0 + ti * dz).min(z0 + to * dz);
        h < z_min
    })
}

/// All obstructing cells along the segment, in traversal order.
pub(crate) fn collect_obstructions(
    grid: &ElevationGrid,
    u0: f64,
    v0: f64,
    z0: f64,
    u1: f64,
    v1: f64,
    z1: f64,
) -> Vec<Obstruction> {
    let dz = z1 - z0;
    let mut out = Vec::new();
    walk_cells(u0, v0, u1, v1, |c, r, ti, to| {
        if c < 0 || r < 0 || c >= grid.width_px as i64 || r >= grid.height_px as i64 {
            return true;
        }
        let h = grid.get(r as usize, c as usize);
        let z_min = (z0 + ti * dz).min(z0 + to * dz);
        if h >= z_min {
            out.push(Obstruction {
                t_enter: ti,
                t_exit: to,
                height_m: h,
            });
        }
        true
    });
    out
}

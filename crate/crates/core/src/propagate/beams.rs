//! Beam tree over unfolded wall images.
//!
//! Each node is a chain of walls. Reflections are unfolded forward from the
//! transmitter: composing one axis reflection per wall maps the chain onto a
//! straight segment, and the set of receivers reachable through the chain
//! becomes the angular wedge of directions that cross every unfolded wall
//! segment, restricted to the far side of the last wall line.
//!
//! Wedge boundary directions are differences of lattice points, or reused
//! parent boundary directions; either way they stay integer-valued, so all
//! containment tests are exact. Wall extents are clipped only against
//! perpendicular ancestor lines (also even integers); the angular cut lives
//! entirely in the wedge.

use super::geometry::{cross, Affine, Axis};
use super::walls::InnerWall;
use super::PRUNE_GAIN_DB;

/// One reflection in a chain: the unfolded wall line, its top, and the
/// cumulative transform after this reflection (used to map the following
/// leg's cells back to the source lattice).
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChainStep {
    pub axis: Axis,
    pub coord: f64,
    pub top_m: f64,
    pub xf: Affine,
}

#[derive(Debug, Clone)]
pub(crate) struct BeamNode {
    /// Reflections in the chain; the last step's transform maps receivers to
    /// their unfolded images.
    pub chain: Box<[ChainStep]>,
    /// Unfolded line of the last wall.
    pub ap_axis: Axis,
    pub ap_coord: f64,
    /// Valid receiver images X satisfy far_sign * (X_axis - ap_coord) > 0.
    pub far_sign: f64,
    /// Counterclockwise wedge [d_lo, d_hi] of directions from the
    /// transmitter, always spanning less than a half turn.
    pub d_lo: (f64, f64),
    pub d_hi: (f64, f64),
}

impl BeamNode {
    pub fn depth(&self) -> u32 {
        self.chain.len() as u32
    }

    pub fn xf(&self) -> Affine {
        self.chain[self.chain.len() - 1].xf
    }
}

pub(crate) struct BeamTree {
    /// Nodes in breadth-first order, so depth layers are contiguous and a
    /// lower max depth corresponds to a prefix of a deeper tree.
    pub nodes: Vec<BeamNode>,
}

/// Unfolded image of a wall: line coordinate, extent, and which side of the
/// line the open (reflective) half-space maps to.
fn unfold_wall(w: &InnerWall, xf: &Affine) -> (f64, f64, f64, f64) {
    let (s_line, o_line, s_ext, o_ext) = match w.axis {
        Axis::U => (xf.su, xf.ou, xf.sv, xf.ov),
        Axis::V => (xf.sv, xf.ov, xf.su, xf.ou),
    };
    let coord = s_line * w.coord + o_line;
    let front = w.front * s_line;
    let (a, b) = (s_ext * w.lo + o_ext, s_ext * w.hi + o_ext);
    (coord, front, a.min(b), a.max(b))
}

fn wall_endpoints(axis: Axis, coord: f64, lo: f64, hi: f64) -> ((f64, f64), (f64, f64)) {
    match axis {
        Axis::U => ((coord, lo), (coord, hi)),
        Axis::V => ((lo, coord), (hi, coord)),
    }
}

/// Distance from the transmitter to an axis-aligned segment, in units.
fn dist_to_wall(tx: (f64, f64), axis: Axis, coord: f64, lo: f64, hi: f64) -> f64 {
    let (along, across) = match axis {
        Axis::U => (tx.1, tx.0),
        Axis::V => (tx.0, tx.1),
    };
    let d_across = across - coord;
    let d_along = if along < lo {
        lo - along
    } else if along > hi {
        along - hi
    } else {
        0.0
    };
    (d_across * d_across + d_along * d_along).sqrt()
}

/// Best-case gain in dB for any path through a wall at `dist_m` with `depth`
/// bounces: free-space loss at that distance (capped at unit gain) plus the
/// per-bounce reflection loss.
fn gain_bound_db(dist_m: f64, depth: u32, gamma: f64, wavelength_m: f64) -> f64 {
    let unit_gain_dist = wavelength_m / (4.0 * std::f64::consts::PI);
    let d = dist_m.max(unit_gain_dist);
    20.0 * (unit_gain_dist / d).log10() + depth as f64 * 20.0 * gamma.log10()
}

pub(crate) fn build_beam_tree(
    walls: &[InnerWall],
    tx: (f64, f64),
    max_depth: u32,
    gamma: f64,
    wavelength_m: f64,
    unit_m: f64,
) -> BeamTree {
    let mut nodes: Vec<BeamNode> = Vec::new();
    if max_depth == 0 || walls.is_empty() {
        return BeamTree { nodes };
    }

    let try_push = |nodes: &mut Vec<BeamNode>,
                    parent: Option<&BeamNode>,
                    w: &InnerWall| {
        let parent_xf = parent.map_or(Affine::identity(), |p| p.xf());
        let (coord, front, mut lo, mut hi) = unfold_wall(w, &parent_xf);
        let tx_across = match w.axis {
            Axis::U => tx.0,
            Axis::V => tx.1,
        };
        // The transmitter must see the reflective face.
        if front * (tx_across - coord) <= 0.0 {
            return;
        }

        if let Some(p) = parent {
            if w.axis == p.ap_axis {
                // Parallel to the parent line: the whole wall must sit
                // strictly beyond it.
                if p.far_sign * (coord - p.ap_coord) <= 0.0 {
                    return;
                }
            } else {
                // Perpendicular: clip the extent to the far side. The cut is
                // closed so corner-grazing paths stay representable.
                if p.far_sign > 0.0 {
                    lo = lo.max(p.ap_coord);
                } else {
                    hi = hi.min(p.ap_coord);
                }
                if lo >= hi {
                    return;
                }
            }
        }

        let (e0, e1) = wall_endpoints(w.axis, coord, lo, hi);
        let g0 = (e0.0 - tx.0, e0.1 - tx.1);
        let g1 = (e1.0 - tx.0, e1.1 - tx.1);
        let orient = cross(g0.0, g0.1, g1.0, g1.1);
        debug_assert!(orient != 0.0, "transmitter on the wall line after front test");
        let (mut d_lo, mut d_hi) = if orient > 0.0 { (g0, g1) } else { (g1, g0) };

        if let Some(p) = parent {
            // Intersect with the parent wedge; every direction involved
            // points across the parent line, so counterclockwise order is
            // total and the pairwise max/min is the true intersection.
            if cross(p.d_lo.0, p.d_lo.1, d_lo.0, d_lo.1) < 0.0 {
                d_lo = p.d_lo;
            }
            if cross(d_hi.0, d_hi.1, p.d_hi.0, p.d_hi.1) < 0.0 {
                d_hi = p.d_hi;
            }
            let span = cross(d_lo.0, d_lo.1, d_hi.0, d_hi.1);
            if span < 0.0 {
                return;
            }
            if span == 0.0 && d_lo.0 * d_hi.0 + d_lo.1 * d_hi.1 <= 0.0 {
                return;
            }
        }

        let depth = parent.map_or(0, |p| p.depth()) + 1;
        let dist_m = dist_to_wall(tx, w.axis, coord, lo, hi) * unit_m;
        if gain_bound_db(dist_m, depth, gamma, wavelength_m) < PRUNE_GAIN_DB {
            return;
        }

        let xf = parent_xf.reflected(w.axis, coord);
        let mut chain = Vec::with_capacity(depth as usize);
        if let Some(p) = parent {
            chain.extend_from_slice(&p.chain);
        }
        chain.push(ChainStep {
            axis: w.axis,
            coord,
            top_m: w.top_m,
            xf,
        });
        nodes.push(BeamNode {
            chain: chain.into_boxed_slice(),
            ap_axis: w.axis,
            ap_coord: coord,
            far_sign: -front,
            d_lo,
            d_hi,
        });
    };

    for w in walls {
        try_push(&mut nodes, None, w);
    }
    let mut layer_start = 0;
    let mut layer_end = nodes.len();
    for _ in 1..max_depth {
        for i in layer_start..layer_end {
            for w in walls {
                let parent = nodes[i].clone();
                try_push(&mut nodes, Some(&parent), w);
            }
        }
        layer_start = layer_end;
        layer_end = nodes.len();
        if layer_start == layer_end {
            break;
        }
    }
    BeamTree { nodes }
}

//! Per-receiver path enumeration: direct ray, beam-traced reflections, and
//! single knife-edge diffraction.

use num_complex::Complex64;

use super::beams::{build_beam_tree, BeamNode, BeamTree};
use super::geometry::{collect_obstructions, cross, segment_clear, walk_cells, Affine, Axis, Frame};
use super::walls::{to_inner, InnerWall, WallSegment};
use super::{
    knife_edge_loss_db, ChannelImpulseResponse, PathComponent, PathKind, PropagationConfig,
};
use crate::raster::ElevationGrid;

/// True iff the straight ray a -> b clears the terrain: every crossed cell's
/// height stays strictly below the linearly interpolated ray height over the
/// crossing interval. Points are (x_m, y_m, z_m) and must lie on the grid.
pub fn los_visible(grid: &ElevationGrid, a: [f64; 3], b: [f64; 3]) -> bool {
    let frame = Frame::of(grid);
    let (u0, v0) = frame.to_units(a[0], a[1]);
    let (u1, v1) = frame.to_units(b[0], b[1]);
    segment_clear(grid, u0, v0, a[2], u1, v1, b[2])
}

/// Scene bound to one transmitter: extracted walls plus the beam tree shared
/// by every receiver evaluation.
pub(crate) struct TraceScene<'a> {
    grid: &'a ElevationGrid,
    frame: Frame,
    tree: BeamTree,
    tx_u: f64,
    tx_v: f64,
    tx_z: f64,
    unit_sq: f64,
    wavelength_m: f64,
    gamma: f64,
    diffraction: bool,
}

type PathKey = (u64, u64, Vec<(u8, u64)>);

impl<'a> TraceScene<'a> {
    pub fn new(
        grid: &'a ElevationGrid,
        walls: &[InnerWall],
        tx_m: [f64; 3],
        cfg: &PropagationConfig,
    ) -> TraceScene<'a> {
        let frame = Frame::of(grid);
        let (tx_u, tx_v) = frame.to_units(tx_m[0], tx_m[1]);
        let gamma = cfg.material.reflection_coeff;
        let wavelength_m = cfg.wavelength_m();
        let tree = build_beam_tree(
            walls,
            (tx_u, tx_v),
            cfg.max_depth,
            gamma,
            wavelength_m,
            frame.unit_m,
        );
        TraceScene {
            grid,
            frame,
            tree,
            tx_u,
            tx_v,
            tx_z: tx_m[2],
            unit_sq: frame.unit_m * frame.unit_m,
            wavelength_m,
            gamma,
            diffraction: cfg.diffraction_enabled,
        }
    }

    /// All paths reaching the receiver, in deterministic traversal order
    /// (direct, diffracted, then reflections by tree order).
    pub fn components_for(&self, rx_m: [f64; 3]) -> Vec<PathComponent> {
        let (ru, rv) = self.frame.to_units(rx_m[0], rx_m[1]);
        let rz = rx_m[2];
        let mut out = Vec::new();

        let los = segment_clear(self.grid, self.tx_u, self.tx_v, self.tx_z, ru, rv, rz);
        if los {
            let d3 = self.dist3(ru - self.tx_u, rv - self.tx_v, rz - self.tx_z);
            out.push(self.component(PathKind::Los, 0, d3, 1.0));
        } else if self.diffraction {
            if let Some(c) = self.diffraction_component(ru, rv, rz) {
                out.push(c);
            }
        }

        let mut seen: std::collections::HashSet<PathKey> = std::collections::HashSet::new();
        for node in &self.tree.nodes {
            if let Some((comp, key)) = self.reflection_component(node, ru, rv, rz) {
                if seen.insert(key) {
                    out.push(comp);
                }
            }
        }
        out
    }

    fn dist3(&self, du: f64, dv: f64, dz: f64) -> f64 {
        ((du * du + dv * dv) * self.unit_sq + dz * dz).sqrt()
    }

    fn component(&self, kind: PathKind, k: u32, length_m: f64, extra_loss: f64) -> PathComponent {
        let spread = self.wavelength_m / (4.0 * std::f64::consts::PI * length_m);
        let amp = (spread * extra_loss).min(1.0);
        let phase = -2.0 * std::f64::consts::PI * length_m / self.wavelength_m;
        PathComponent::new(kind, k, length_m, Complex64::from_polar(amp, phase))
    }

    fn reflection_component(
        &self,
        node: &BeamNode,
        ru: f64,
        rv: f64,
        rz: f64,
    ) -> Option<(PathComponent, PathKey)> {
        let (iu, iv) = node.xf().apply(ru, rv);
        let du = iu - self.tx_u;
        let dv = iv - self.tx_v;
        if cross(node.d_lo.0, node.d_lo.1, du, dv) < 0.0 {
            return None;
        }
        if cross(du, dv, node.d_hi.0, node.d_hi.1) < 0.0 {
            return None;
        }
        let across = match node.ap_axis {
            Axis::U => iu,
            Axis::V => iv,
        };
        if node.far_sign * (across - node.ap_coord) <= 0.0 {
            return None;
        }

        // Ray height at each wall crossing must stay at or below the top.
        let dz = rz - self.tx_z;
        let k = node.chain.len();
        let mut t_cross = Vec::with_capacity(k);
        for step in node.chain.iter() {
            let (a, b) = match step.axis {
                Axis::U => (self.tx_u, iu),
                Axis::V => (self.tx_v, iv),
            };
            let t = (step.coord - a) / (b - a);
            if self.tx_z + t * dz > step.top_m {
                return None;
            }
            t_cross.push(t);
        }
        debug_assert!(t_cross.windows(2).all(|w| w[0] <= w[1]));

        // Terrain clearance along the unfolded segment. Wall lines sit on
        // cell boundaries, so each visited cell lies in exactly one leg; the
        // walk reproduces each crossing parameter bitwise, making the leg
        // advance exact.
        let mut leg = 0usize;
        let clear = walk_cells(self.tx_u, self.tx_v, iu, iv, |cu, rv_cell, ti, to| {
            while leg < k && t_cross[leg] <= ti {
                leg += 1;
            }
            let xf = if leg == 0 {
                Affine::identity()
            } else {
                node.chain[leg - 1].xf
            };
            let (c, r) = xf.cell_back(cu, rv_cell);
            if c < 0 || r < 0 || c >= self.grid.width_px as i64 || r >= self.grid.height_px as i64
            {
                return true;
            }
            let h = self.grid.get(r as usize, c as usize);
            let z_min = (self.tx_z + ti * dz).min(self.tx_z + to * dz);
            h < z_min
        });
        if !clear {
            return None;
        }

        let d3 = self.dist3(du, dv, dz);
        let comp = self.component(PathKind::Reflected, k as u32, d3, self.gamma.powi(k as i32));
        let key = (
            iu.to_bits(),
            iv.to_bits(),
            node.chain
                .iter()
                .map(|s| (matches!(s.axis, Axis::V) as u8, s.coord.to_bits()))
                .collect(),
        );
        Some((comp, key))
    }

    /// Single dominant knife edge on the blocked direct transect: the
    /// obstruction with the largest Fresnel parameter (ties: shorter bent
    /// path, then traversal order).
    fn diffraction_component(&self, ru: f64, rv: f64, rz: f64) -> Option<PathComponent> {
        let obs = collect_obstructions(self.grid, self.tx_u, self.tx_v, self.tx_z, ru, rv, rz);
        let du = ru - self.tx_u;
        let dv = rv - self.tx_v;
        let dz = rz - self.tx_z;
        let mut best: Option<(f64, f64)> = None;
        for o in &obs {
            // Edge position as an offset from the transmitter keeps d1 and
            // d2 invariant under the lattice transforms.
            let t_mid = 0.5 * (o.t_enter + o.t_exit);
            let ou = t_mid * du;
            let ov = t_mid * dv;
            let d1 = self.dist3(ou, ov, o.height_m - self.tx_z);
            let d2 = self.dist3(du - ou, dv - ov, rz - o.height_m);
            if d1 == 0.0 || d2 == 0.0 {
                continue;
            }
            let h_clear = o.height_m - (self.tx_z + t_mid * dz);
            let nu =
                h_clear * (2.0 * (d1 + d2) / (self.wavelength_m * d1 * d2)).sqrt();
            let d_tot = d1 + d2;
            let better = match best {
                None => true,
                Some((best_nu, best_d)) => nu > best_nu || (nu == best_nu && d_tot < best_d),
            };
            if better {
                best = Some((nu, d_tot));
            }
        }
        let (nu, d_tot) = best?;
        let loss = 10f64.powf(-knife_edge_loss_db(nu) / 20.0);
        Some(self.component(PathKind::Diffracted, 1, d_tot, loss))
    }
}

/// All propagation paths from tx to rx over the scene. Points are
/// (x_m, y_m, z_m) with absolute heights. `walls` must lie on cell
/// boundaries of `grid` (as produced by [`extract_walls`]); `cfg` must be
/// valid. Both are caller contracts and panic when violated.
///
/// [`extract_walls`]: super::extract_walls
pub fn trace_paths(
    grid: &ElevationGrid,
    walls: &[WallSegment],
    tx: [f64; 3],
    rx: [f64; 3],
    cfg: &PropagationConfig,
) -> ChannelImpulseResponse {
    cfg.validate().expect("invalid propagation config");
    let frame = Frame::of(grid);
    let inner = to_inner(&frame, walls).expect("walls must lie on cell boundaries");
    let scene = TraceScene::new(grid, &inner, tx, cfg);
    ChannelImpulseResponse::from_components(scene.components_for(rx))
}

//! Deterministic 2.5D multipath oracle over rasterized scenes.
//!
//! Paths combine a visibility-tested direct ray, specular wall reflections
//! found by the image method (via exact beam tracing), and a single dominant
//! rooftop knife-edge diffraction when the direct ray is blocked. Per-cell
//! receive power is the incoherent sum of squared path amplitudes, reported
//! as path gain in dB and clamped to the [-150, -50] display range.
//!
//! Geometry is evaluated in a doubled integer lattice (cell centers at odd
//! coordinates, cell boundaries at even ones). All geometric predicates on
//! such inputs are exact in f64, which makes radio maps bit-identical under
//! the six grid transforms and independent of thread count.

mod beams;
mod geometry;
mod map;
mod sweep;
mod trace;
mod walls;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

pub use map::{compute_radio_map, compute_radio_map_raw, RadioMap};
pub use sweep::{fidelity_sweep, misconfig_study, MisconfigReport, SweepReport, SweepRow};
pub use trace::{los_visible, trace_paths};
pub use walls::{extract_walls, WallSegment};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Display floor for path gain; also the "no coverage" sentinel.
pub const GAIN_FLOOR_DB: f64 = -150.0;
/// Display ceiling for path gain; pinned at the transmitter cell.
pub const GAIN_CEIL_DB: f64 = -50.0;

/// Paths with a best-case gain below this are dropped during tracing. The
/// cutoff sits 30 dB under the display floor so discarded energy cannot move
/// any clamped cell value.
pub(crate) const PRUNE_GAIN_DB: f64 = -180.0;

/// Interaction type of a propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Los,
    Reflected,
    Diffracted,
}

impl PathKind {
    fn rank(self) -> u8 {
        match self {
            PathKind::Los => 0,
            PathKind::Reflected => 1,
            PathKind::Diffracted => 2,
        }
    }
}

/// One multipath component: complex voltage gain and propagation delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    /// Complex voltage gain; magnitude in (0, 1].
    pub amplitude: Complex64,
    /// Propagation delay, path length over the speed of light.
    pub delay_s: f64,
    /// Wall bounces for reflected paths, 1 for diffracted, 0 for direct.
    pub interaction_count: u32,
    pub kind: PathKind,
}

impl PathComponent {
    pub(crate) fn new(kind: PathKind, interactions: u32, length_m: f64, amplitude: Complex64) -> Self {
        PathComponent {
            amplitude,
            delay_s: length_m / SPEED_OF_LIGHT_M_S,
            interaction_count: interactions,
            kind,
        }
    }

    /// Smallest reflection depth at which this component appears. Direct and
    /// diffracted paths exist from depth 0.
    fn appearance_depth(&self) -> u32 {
        match self.kind {
            PathKind::Reflected => self.interaction_count,
            PathKind::Los | PathKind::Diffracted => 0,
        }
    }

    /// Ordering key: appearance depth first so that raising the reflection
    /// depth only appends components, then delay, then amplitude bits.
    fn sort_key(&self) -> (u32, u8, u64, u64, u64) {
        (
            self.appearance_depth(),
            self.kind.rank(),
            self.delay_s.to_bits(),
            self.amplitude.norm_sqr().to_bits(),
            self.amplitude.re.to_bits() ^ self.amplitude.im.to_bits().rotate_left(1),
        )
    }
}

/// Multipath channel between one transmitter and one receiver position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelImpulseResponse {
    /// Components sorted by delay; empty in deep shadow.
    pub components: Vec<PathComponent>,
}

impl ChannelImpulseResponse {
    /// Build from unordered components, sorting by delay (ties broken by
    /// interaction count and amplitude bits for a deterministic order).
    pub fn from_components(mut components: Vec<PathComponent>) -> Self {
        components.sort_by_key(|c| {
            (
                c.delay_s.to_bits(),
                c.interaction_count,
                c.kind.rank(),
                c.amplitude.norm_sqr().to_bits(),
            )
        });
        ChannelImpulseResponse { components }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Reflecting surface material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    /// Reflection coefficient magnitude, in (0, 1).
    pub reflection_coeff: f64,
}

impl Material {
    pub fn concrete() -> Self {
        Material {
            name: "concrete".into(),
            reflection_coeff: 0.5,
        }
    }

    pub fn brick() -> Self {
        Material {
            name: "brick".into(),
            reflection_coeff: 0.35,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.reflection_coeff > 0.0 && self.reflection_coeff < 1.0) {
            return Err(CoreError::invalid(format!(
                "reflection coefficient {} outside (0, 1)",
                self.reflection_coeff
            )));
        }
        Ok(())
    }
}

/// Tracing parameters shared by all per-cell evaluations of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub frequency_hz: f64,
    /// Maximum reflection bounces per path, at most 20.
    pub max_depth: u32,
    pub diffraction_enabled: bool,
    pub material: Material,
    pub tx_power_dbm: f64,
    /// Receiver height above local terrain.
    pub rx_height_m: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            frequency_hz: 1e9,
            max_depth: 10,
            diffraction_enabled: true,
            material: Material::concrete(),
            tx_power_dbm: 44.0,
            rx_height_m: 1.5,
        }
    }
}

pub const MAX_REFLECTION_DEPTH: u32 = 20;

impl PropagationConfig {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) || !self.frequency_hz.is_finite() {
            return Err(CoreError::invalid("carrier frequency must be positive"));
        }
        if self.max_depth > MAX_REFLECTION_DEPTH {
            return Err(CoreError::invalid(format!(
                "max_depth {} exceeds the {MAX_REFLECTION_DEPTH}-bounce limit",
                self.max_depth
            )));
        }
        if !(self.rx_height_m > 0.0) {
            return Err(CoreError::invalid("rx height must be positive"));
        }
        self.material.validate()
    }
}

/// Incoherent power sum of a CIR in dB, without clamping. Empty input gives
/// negative infinity.
///
/// Components are accumulated in (appearance depth, delay) order, so the sum
/// at reflection depth d is a prefix of the sum at depth d+1; with
/// round-to-nearest addition of non-negative terms the result is then exactly
/// non-decreasing in depth.
pub fn path_gain_from_cir_raw(cir: &ChannelImpulseResponse) -> f64 {
    if cir.components.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut order: Vec<&PathComponent> = cir.components.iter().collect();
    order.sort_by_key(|c| c.sort_key());
    let power: f64 = order.iter().fold(0.0, |acc, c| acc + c.amplitude.norm_sqr());
    10.0 * power.log10()
}

/// Path gain of a CIR in dB, clamped to [-150, -50].
pub fn path_gain_from_cir(cir: &ChannelImpulseResponse) -> f64 {
    path_gain_from_cir_raw(cir).clamp(GAIN_FLOOR_DB, GAIN_CEIL_DB)
}

/// Knife-edge diffraction loss J(nu) in dB for Fresnel parameter `nu`:
/// 6.9 + 20 log10(sqrt((nu - 0.1)^2 + 1) + nu - 0.1) above nu = -0.78, zero
/// below.
pub fn knife_edge_loss_db(nu: f64) -> f64 {
    if nu > -0.78 {
        let shifted = nu - 0.1;
        6.9 + 20.0 * ((shifted * shifted + 1.0).sqrt() + shifted).log10()
    } else {
        0.0
    }
}

//! Link budget, MCS table, and the per-slot adaptation primitives.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Noise-limited single-cell link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: 44.0,
            bandwidth_hz: 2e6,
            noise_figure_db: 7.0,
        }
    }
}

impl LinkBudget {
    /// Thermal noise floor: `-174 dBm/Hz + 10 log10(bandwidth) + NF`.
    pub fn noise_power_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(CoreError::invalid("bandwidth must be positive"));
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_figure_db.is_finite() {
            return Err(CoreError::invalid("link budget fields must be finite"));
        }
        Ok(())
    }
}

/// One modulation-and-coding option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub index: usize,
    /// Bits per second per Hz when decoding succeeds.
    pub spectral_efficiency: f64,
    /// SNR at which this entry's BLER crosses one half, dB.
    pub snr_threshold_db: f64,
    /// Width of the BLER transition, dB.
    pub bler_slope: f64,
}

/// Ordered MCS options, least to most aggressive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
}

impl Default for McsTable {
    /// 15 entries, thresholds -6 to +22 dB in 2 dB steps, efficiencies 0.2
    /// to 5.6. Configuration defaults, not calibrated against any hardware.
    fn default() -> Self {
        let entries = (0..15)
            .map(|i| McsEntry {
                index: i,
                spectral_efficiency: 0.2 + 5.4 * i as f64 / 14.0,
                snr_threshold_db: -6.0 + 2.0 * i as f64,
                bler_slope: 1.0,
            })
            .collect();
        McsTable { entries }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(CoreError::invalid("MCS table is empty"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.index != i {
                return Err(CoreError::invalid(format!(
                    "entry {i} carries index {}",
                    e.index
                )));
            }
            if !(e.bler_slope > 0.0 && e.bler_slope.is_finite()) {
                return Err(CoreError::invalid(format!("entry {i}: slope must be positive")));
            }
            if !(e.spectral_efficiency > 0.0 && e.spectral_efficiency.is_finite()) {
                return Err(CoreError::invalid(format!(
                    "entry {i}: efficiency must be positive"
                )));
            }
            if i > 0 {
                let prev = &self.entries[i - 1];
                if e.snr_threshold_db <= prev.snr_threshold_db {
                    return Err(CoreError::invalid(format!(
                        "entry {i}: thresholds must strictly increase"
                    )));
                }
                if e.spectral_efficiency <= prev.spectral_efficiency {
                    return Err(CoreError::invalid(format!(
                        "entry {i}: efficiencies must strictly increase"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn max_efficiency(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.spectral_efficiency)
    }
}

/// Outer-loop link adaptation state.
///
/// The asymmetric steps put the fixed point of the offset drift at a long-run
/// BLER equal to `target_bler`: the expected drift vanishes when
/// `p_nack * step_up = (1 - p_nack) * step_down`, which solves to
/// `p_nack = target_bler`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OllaState {
    pub offset_db: f64,
    pub target_bler: f64,
    pub step_up_db: f64,
}

impl Default for OllaState {
    fn default() -> Self {
        OllaState {
            offset_db: 0.0,
            target_bler: 0.1,
            step_up_db: 0.5,
        }
    }
}

impl OllaState {
    pub fn step_down_db(&self) -> f64 {
        self.step_up_db * self.target_bler / (1.0 - self.target_bler)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_bler > 0.0 && self.target_bler < 1.0) {
            return Err(CoreError::invalid("target BLER must lie in (0, 1)"));
        }
        if !(self.step_up_db > 0.0 && self.step_up_db.is_finite()) {
            return Err(CoreError::invalid("step size must be positive"));
        }
        if !self.offset_db.is_finite() {
            return Err(CoreError::invalid("offset must be finite"));
        }
        Ok(())
    }
}

/// Noise-limited SINR: `tx_power + path_gain - noise_power`, dB.
pub fn sinr_db(path_gain_db: f64, budget: &LinkBudget) -> f64 {
    budget.tx_power_dbm + path_gain_db - budget.noise_power_dbm()
}

/// Shannon capacity `bandwidth * log2(1 + snr_linear)`, bits per second.
pub fn shannon_capacity(sinr_db: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + 10f64.powf(sinr_db / 10.0)).log2()
}

/// Block error probability of an entry at the given SINR.
pub fn bler(sinr_db: f64, entry: &McsEntry) -> f64 {
    1.0 / (1.0 + ((sinr_db - entry.snr_threshold_db) / entry.bler_slope).exp())
}

/// One outer-loop update: a NACK backs off, an ACK advances.
pub fn olla_step(state: OllaState, ack: bool) -> OllaState {
    let offset_db = if ack {
        state.offset_db - state.step_down_db()
    } else {
        state.offset_db + state.step_up_db
    };
    OllaState { offset_db, ..state }
}

/// Highest entry whose threshold the offset-adjusted SINR clears; entry 0
/// when none qualifies.
pub fn select_mcs(sinr_db: f64, olla: &OllaState, table: &McsTable) -> usize {
    let adjusted = sinr_db - olla.offset_db;
    let mut chosen = 0;
    for e in &table.entries {
        if e.snr_threshold_db <= adjusted {
            chosen = e.index;
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sinr_matches_the_budget_arithmetic() {
        // Bandwidth 10^6.3 Hz puts the noise floor at -174 + 63 + 7 = -104.
        let budget = LinkBudget {
            tx_power_dbm: 44.0,
            bandwidth_hz: 10f64.powf(6.3),
            noise_figure_db: 7.0,
        };
        assert!((budget.noise_power_dbm() - (-104.0)).abs() < 1e-9);
        assert!((sinr_db(-100.0, &budget) - 48.0).abs() < 1e-9);
        // Break-even: path gain exactly cancels power over noise.
        let pg = budget.noise_power_dbm() - budget.tx_power_dbm;
        assert!(sinr_db(pg, &budget).abs() < 1e-12);
    }

    #[test]
    fn capacity_hits_the_log_landmarks() {
        let bw = 2e6;
        assert!((shannon_capacity(0.0, bw) - bw).abs() < 1e-6);
        // Linear SNR 3 doubles the rate.
        let s3 = 10.0 * 3f64.log10();
        assert!((shannon_capacity(s3, bw) - 2.0 * bw).abs() < 1e-6);
        assert!(shannon_capacity(-200.0, bw) < 1e-12 * bw);
    }

    #[test]
    fn bler_sigmoid_landmarks() {
        let e = McsEntry {
            index: 0,
            spectral_efficiency: 1.0,
            snr_threshold_db: 4.0,
            bler_slope: 1.5,
        };
        assert_eq!(bler(4.0, &e), 0.5);
        assert!(bler(4.0 + 10.0 * 1.5, &e) < 1e-4);
        assert!(bler(3.0, &e) > bler(5.0, &e));
    }

    #[test]
    fn default_table_is_valid_and_spans_its_range() {
        let t = McsTable::default();
        t.validate().unwrap();
        assert_eq!(t.entries.len(), 15);
        assert_eq!(t.entries[0].snr_threshold_db, -6.0);
        assert_eq!(t.entries[14].snr_threshold_db, 22.0);
        assert!((t.entries[0].spectral_efficiency - 0.2).abs() < 1e-12);
        assert!((t.max_efficiency() - 5.6).abs() < 1e-12);
    }

    #[test]
    fn table_validation_rejects_disorder() {
        let mut t = McsTable::default();
        t.entries[3].snr_threshold_db = t.entries[2].snr_threshold_db;
        assert!(t.validate().is_err());
        let mut t = McsTable::default();
        t.entries[5].spectral_efficiency = 0.1;
        assert!(t.validate().is_err());
        assert!(McsTable { entries: vec![] }.validate().is_err());
    }

    #[test]
    fn olla_steps_in_the_forced_directions() {
        let start = OllaState::default();
        // All-ACK stream walks the offset down monotonically.
        let mut s = start;
        let mut prev = s.offset_db;
        for _ in 0..10 {
            s = olla_step(s, true);
            assert!(s.offset_db < prev);
            prev = s.offset_db;
        }
        assert!(olla_step(start, false).offset_db > start.offset_db);

        // Symmetric target: alternating ACK/NACK returns to the start.
        let sym = OllaState {
            target_bler: 0.5,
            ..OllaState::default()
        };
        assert_eq!(sym.step_down_db(), sym.step_up_db);
        let after = olla_step(olla_step(sym, true), false);
        assert!((after.offset_db - sym.offset_db).abs() < 1e-12);
    }

    #[test]
    fn select_mcs_floors_and_saturates() {
        let t = McsTable::default();
        let olla = OllaState::default();
        assert_eq!(select_mcs(-30.0, &olla, &t), 0);
        assert_eq!(select_mcs(100.0, &olla, &t), 14);
        let huge_offset = OllaState {
            offset_db: 1e6,
            ..OllaState::default()
        };
        assert_eq!(select_mcs(20.0, &huge_offset, &t), 0);
    }

    proptest! {
        #[test]
        fn sinr_is_monotone_in_path_gain(a in -150.0..-50.0f64, b in -150.0..-50.0f64) {
            let budget = LinkBudget::default();
            prop_assert_eq!(a < b, sinr_db(a, &budget) < sinr_db(b, &budget));
        }

        #[test]
        fn selection_matches_a_brute_force_scan(
            sinr in -20.0..40.0f64,
            offset in -10.0..10.0f64,
        ) {
            let t = McsTable::default();
            let olla = OllaState { offset_db: offset, ..OllaState::default() };
            let got = select_mcs(sinr, &olla, &t);
            let want = t.entries.iter()
                .filter(|e| e.snr_threshold_db <= sinr - offset)
                .map(|e| e.index)
                .max()
                .unwrap_or(0);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn selection_is_monotone_in_sinr(
            a in -20.0..40.0f64,
            b in -20.0..40.0f64,
        ) {
            let t = McsTable::default();
            let olla = OllaState::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(select_mcs(lo, &olla, &t) <= select_mcs(hi, &olla, &t));
        }

        #[test]
        fn bler_is_strictly_decreasing(
            s in -20.0..40.0f64,
            idx in 0usize..15,
        ) {
            let t = McsTable::default();
            let e = &t.entries[idx];
            prop_assert!(bler(s, e) > bler(s + 0.5, e));
        }
    }
}

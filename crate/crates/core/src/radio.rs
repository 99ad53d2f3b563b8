//! Closed-form downlink physical layer: PRB grid arithmetic, path loss,
//! Rayleigh fading, SINR and Shannon rates.
//!
//! All bandwidths are in Hz and all powers in watts. Gains are linear.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::ids::{RuId, UeId};

/// Bandwidth of one PRB at numerology 0 (12 subcarriers of 15 kHz).
pub const BASE_PRB_BANDWIDTH_HZ: f64 = 180_000.0;
pub const BASE_SUBCARRIER_SPACING_HZ: f64 = 15_000.0;
pub const SUBCARRIERS_PER_PRB: f64 = 12.0;
pub const MAX_NUMEROLOGY: u8 = 4;
/// Distances below this are clamped before the path-loss power law.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub total_bandwidth_hz: f64,
    pub guard_band_hz: f64,
    pub numerology: u8,
    pub prb_count: usize,
    pub prb_bandwidth_hz: f64,
}

impl SpectrumGrid {
    pub fn new(total_bandwidth_hz: f64, guard_band_hz: f64, numerology: u8) -> Result<Self> {
        let prb_count = prb_count(total_bandwidth_hz, guard_band_hz, numerology)?;
        Ok(Self {
            total_bandwidth_hz,
            guard_band_hz,
            numerology,
            prb_count,
            prb_bandwidth_hz: prb_bandwidth(numerology),
        })
    }
}

/// Width of one PRB, `12 * 15 kHz * 2^mu`.
pub fn prb_bandwidth(numerology: u8) -> f64 {
    SUBCARRIERS_PER_PRB * BASE_SUBCARRIER_SPACING_HZ * f64::from(1u32 << numerology)
}

/// Number of PRBs that fit in the usable band `B - 2 B_G` at numerology `mu`.
pub fn prb_count(total_bandwidth_hz: f64, guard_band_hz: f64, numerology: u8) -> Result<usize> {
    if numerology > MAX_NUMEROLOGY {
        return Err(Error::InvalidGrid(format!(
            "numerology {numerology} outside 0..={MAX_NUMEROLOGY}"
        )));
    }
    let usable = total_bandwidth_hz - 2.0 * guard_band_hz;
    if !(usable > 0.0) || !usable.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "usable bandwidth {usable} Hz is not positive"
        )));
    }
    let count = (usable / (BASE_PRB_BANDWIDTH_HZ * f64::from(1u32 << numerology))).floor();
    if count < 1.0 {
        return Err(Error::InvalidGrid(format!(
            "no PRB fits in {usable} Hz at numerology {numerology}"
        )));
    }
    Ok(count as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuKind {
    Macro,
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuConfig {
    pub id: RuId,
    pub kind: RuKind,
    pub position: [f64; 2],
    pub radius_m: f64,
    pub prb_power_w: f64,
    pub max_power_w: f64,
    pub min_power_w: f64,
    pub pathloss_constant: f64,
    pub pathloss_exponent: f64,
}

impl RuConfig {
    pub fn distance_to(&self, pos: [f64; 2]) -> f64 {
        (pos[0] - self.position[0]).hypot(pos[1] - self.position[1])
    }

    /// Checks the per-PRB power floor and the sum-power budget for a grid
    /// with `max_active_prbs` simultaneously active PRBs.
    pub fn validate(&self, max_active_prbs: usize) -> std::result::Result<(), String> {
        if !(self.radius_m > 0.0) {
            return Err(format!("radius_m must be > 0, got {}", self.radius_m));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(format!(
                "pathloss_exponent must be > 0, got {}",
                self.pathloss_exponent
            ));
        }
        if !(self.pathloss_constant > 0.0) {
            return Err(format!(
                "pathloss_constant must be > 0, got {}",
                self.pathloss_constant
            ));
        }
        if self.prb_power_w < self.min_power_w {
            return Err(format!(
                "prb_power_w {} below min_power_w {}",
                self.prb_power_w, self.min_power_w
            ));
        }
        let total = max_active_prbs as f64 * self.prb_power_w;
        if total > self.max_power_w {
            return Err(format!(
                "{max_active_prbs} PRBs x {} W = {total} W exceeds max_power_w {}",
                self.prb_power_w, self.max_power_w
            ));
        }
        Ok(())
    }
}

/// Large-scale path loss `K * D^-alpha`, with `D` clamped to [`MIN_DISTANCE_M`].
pub fn path_loss(constant: f64, exponent: f64, distance_m: f64) -> f64 {
    constant * distance_m.max(MIN_DISTANCE_M).powf(-exponent)
}

/// Rayleigh amplitude fading as a unit-mean exponential power gain.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let h: f64 = rng.sample(Exp1);
        if h > 0.0 {
            return h;
        }
    }
}

/// Thermal noise over `bandwidth_hz` given a PSD in dBm/Hz.
pub fn noise_power(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((psd_dbm_per_hz + 10.0 * bandwidth_hz.log10() - 30.0) / 10.0)
}

pub fn per_prb_rate(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

pub fn is_satisfied(rate_bps: f64, demand_bps: f64, tolerance: f64) -> bool {
    rate_bps >= (1.0 - tolerance) * demand_bps
}

/// Channel between one RU and one UE for the current slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkState {
    pub ru_id: RuId,
    pub ue_id: UeId,
    pub distance_m: f64,
    pub pathloss: f64,
    /// Small-scale power gain per PRB.
    pub fading: Vec<f64>,
}

impl LinkState {
    pub fn new(ru: &RuConfig, ue_id: UeId, ue_position: [f64; 2], fading: Vec<f64>) -> Self {
        let distance_m = ru.distance_to(ue_position);
        Self {
            ru_id: ru.id,
            ue_id,
            distance_m,
            pathloss: path_loss(ru.pathloss_constant, ru.pathloss_exponent, distance_m),
            fading,
        }
    }

    pub fn gain(&self, prb: usize) -> f64 {
        self.pathloss * self.fading[prb]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuTx {
    pub id: RuId,
    pub prb_power_w: f64,
}

/// One UE's view of the slot: identity, service parameters and its links
/// to every RU (same order as [`RadioSnapshot::rus`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeRadio {
    pub id: UeId,
    pub serving_ru: RuId,
    pub class: String,
    pub demand_bps: f64,
    pub position: [f64; 2],
    pub links: Vec<LinkState>,
}

impl UeRadio {
    pub fn link(&self, ru: RuId) -> Option<&LinkState> {
        self.links.iter().find(|l| l.ru_id == ru)
    }

    pub fn serving_link(&self) -> &LinkState {
        self.link(self.serving_ru)
            .expect("UE has a link to its serving RU")
    }
}

/// Everything the rate and conflict computations need for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSnapshot {
    pub prb_count: usize,
    pub prb_bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub rus: Vec<RuTx>,
    /// Sorted by UE id.
    pub ues: Vec<UeRadio>,
}

impl RadioSnapshot {
    pub fn ue(&self, id: UeId) -> Result<&UeRadio> {
        self.ues
            .binary_search_by_key(&id, |u| u.id)
            .map(|i| &self.ues[i])
            .map_err(|_| Error::UnknownUe(id))
    }

    pub fn ru_power(&self, ru: RuId) -> f64 {
        self.rus
            .iter()
            .find(|r| r.id == ru)
            .map(|r| r.prb_power_w)
            .unwrap_or(0.0)
    }

    pub fn ue_ids(&self) -> impl Iterator<Item = UeId> + '_ {
        self.ues.iter().map(|u| u.id)
    }

    /// SINR the UE would see on `prb` from its serving RU, with every other
    /// RU that is active on `prb` in `assignment` interfering.
    pub fn sinr_if_served(&self, ue: UeId, prb: usize, assignment: &Assignment) -> Result<f64> {
        let view = self.ue(ue)?;
        let serving = view.serving_ru;
        let signal = self.ru_power(serving) * view.serving_link().gain(prb);
        let interference: f64 = view
            .links
            .iter()
            .filter(|l| l.ru_id != serving && assignment.ru_active(l.ru_id, prb))
            .map(|l| self.ru_power(l.ru_id) * l.gain(prb))
            .sum();
        Ok(signal / (interference + self.noise_power_w))
    }

    /// SINR of `ue` on `prb`; zero unless the assignment gives it that PRB.
    pub fn sinr(&self, ue: UeId, prb: usize, assignment: &Assignment) -> Result<f64> {
        if assignment.prb_of(ue) != Some(prb) {
            self.ue(ue)?;
            return Ok(0.0);
        }
        self.sinr_if_served(ue, prb, assignment)
    }

    pub fn rate_if_served(&self, ue: UeId, prb: usize, assignment: &Assignment) -> Result<f64> {
        Ok(per_prb_rate(
            self.prb_bandwidth_hz,
            self.sinr_if_served(ue, prb, assignment)?,
        ))
    }

    /// Total rate of the UE over every PRB it holds in `assignment`.
    pub fn ue_total_rate(&self, ue: UeId, assignment: &Assignment) -> Result<f64> {
        match assignment.prb_of(ue) {
            Some(prb) => Ok(per_prb_rate(
                self.prb_bandwidth_hz,
                self.sinr(ue, prb, assignment)?,
            )),
            None => {
                self.ue(ue)?;
                Ok(0.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_relative_eq;

    const B: f64 = 10e6;
    const BG: f64 = 0.25e6;

    #[test]
    fn prb_count_table_values() {
        let counts: Vec<usize> = (0..=4).map(|mu| prb_count(B, BG, mu).unwrap()).collect();
        assert_eq!(counts, vec![52, 26, 13, 6, 3]);
    }

    #[test]
    fn prb_count_rejects_unusable_grids() {
        assert!(prb_count(1e6, 0.5e6, 0).is_err());
        assert!(prb_count(1e6, 0.6e6, 0).is_err());
        assert!(prb_count(100e3, 0.0, 0).is_err());
        assert!(prb_count(B, BG, 5).is_err());
        assert!(SpectrumGrid::new(300e3, 0.0, 1).is_err());
    }

    #[test]
    fn grid_prb_width() {
        let g = SpectrumGrid::new(B, BG, 2).unwrap();
        assert_eq!(g.prb_count, 13);
        assert_eq!(g.prb_bandwidth_hz, 720_000.0);
    }

    #[test]
    fn path_loss_examples() {
        assert_relative_eq!(path_loss(1.0, 2.7, 100.0), 10f64.powf(-5.4), max_relative = 1e-12);
        assert_relative_eq!(path_loss(1.0, 2.7, 100.0), 3.981e-6, max_relative = 1e-3);
        assert_eq!(path_loss(1.0, 3.3, 1.0), 1.0);
        assert_relative_eq!(path_loss(1.0, 2.8, 10.0), 1.585e-3, max_relative = 1e-3);
        // clamped below one metre
        assert_eq!(path_loss(1.0, 2.8, 0.2), 1.0);
    }

    #[test]
    fn fading_moments() {
        let mut rng = stream_rng(11, Stream::Fading, &[]);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_fading(&mut rng)).collect();
        assert!(draws.iter().all(|&h| h > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn noise_power_examples() {
        let n180 = noise_power(-174.0, 180e3);
        assert_relative_eq!(n180, 7.16e-16, max_relative = 2e-3);
        assert_relative_eq!(noise_power(-174.0, 360e3), 2.0 * n180, max_relative = 1e-12);
        assert_relative_eq!(noise_power(-30.0, 1.0), 1e-6, max_relative = 1e-12);
    }

    #[test]
    fn shannon_rate_examples() {
        assert_relative_eq!(per_prb_rate(180e3, 3.0), 360e3, max_relative = 1e-12);
        assert_eq!(per_prb_rate(180e3, 0.0), 0.0);
        assert_relative_eq!(per_prb_rate(180e3, 5.56e8), 5.23e6, max_relative = 2e-3);
    }

    #[test]
    fn satisfaction_boundaries() {
        assert!(is_satisfied(1.0e6, 1.0e6, 0.0));
        assert!(is_satisfied(0.8e6, 1.0e6, 0.2));
        assert!(!is_satisfied(0.79e6, 1.0e6, 0.2));
    }

    #[test]
    fn ru_budget_validation() {
        let ru = RuConfig {
            id: RuId(0),
            kind: RuKind::Micro,
            position: [0.0, 0.0],
            radius_m: 50.0,
            prb_power_w: 0.01,
            max_power_w: 0.5,
            min_power_w: 0.001,
            pathloss_constant: 1.0,
            pathloss_exponent: 2.8,
        };
        assert!(ru.validate(50).is_ok());
        assert!(ru.validate(51).is_err());
        let weak = RuConfig { prb_power_w: 0.0005, ..ru.clone() };
        assert!(weak.validate(1).is_err());
        let flat = RuConfig { radius_m: 0.0, ..ru };
        assert!(flat.validate(1).is_err());
    }
}

//! rApp policy construction: turns per-RU forecasts and SLA tables into the
//! profile the xApp runs with for one episode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::RuId;
use crate::radio::{prb_count, MAX_NUMEROLOGY};
use crate::traffic::worst_case;

pub const HIGH_PRIORITY_WEIGHT: f64 = 2.0;
pub const LOW_PRIORITY_WEIGHT: f64 = 1.0;
pub const DEFAULT_HEADROOM: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColoringScheme {
    Random,
    Sequential,
    Greedy,
    WelshPowell,
    Dsatur,
}

impl ColoringScheme {
    pub const ALL: [ColoringScheme; 5] = [
        ColoringScheme::Random,
        ColoringScheme::Sequential,
        ColoringScheme::Greedy,
        ColoringScheme::WelshPowell,
        ColoringScheme::Dsatur,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            ColoringScheme::Random => "random",
            ColoringScheme::Sequential => "sequential",
            ColoringScheme::Greedy => "greedy",
            ColoringScheme::WelshPowell => "welsh-powell",
            ColoringScheme::Dsatur => "dsatur",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessScheme {
    None,
    Rr,
    Pf,
    Mpf,
}

impl FairnessScheme {
    pub const ALL: [FairnessScheme; 4] = [
        FairnessScheme::None,
        FairnessScheme::Rr,
        FairnessScheme::Pf,
        FairnessScheme::Mpf,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            FairnessScheme::None => "none",
            FairnessScheme::Rr => "rr",
            FairnessScheme::Pf => "pf",
            FairnessScheme::Mpf => "mpf",
        }
    }
}

impl fmt::Display for ColoringScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for FairnessScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ColoringScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown coloring scheme `{s}`")))
    }
}

impl FromStr for FairnessScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fairness scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub total_bandwidth_hz: f64,
    pub guard_band_hz: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            total_bandwidth_hz: 10e6,
            guard_band_hz: 0.25e6,
        }
    }
}

/// SLA tables keyed by UE class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaConfig {
    pub priorities: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for SlaConfig {
    fn default() -> Self {
        Self {
            priorities: [("standard".to_string(), 1.0)].into(),
            tolerances: [("standard".to_string(), 0.0)].into(),
        }
    }
}

impl SlaConfig {
    /// Two-class SLA: `high` (gold) and `low` (standard) users.
    pub fn high_low() -> Self {
        Self {
            priorities: [
                ("high".to_string(), HIGH_PRIORITY_WEIGHT),
                ("low".to_string(), LOW_PRIORITY_WEIGHT),
            ]
            .into(),
            tolerances: [("high".to_string(), 0.0), ("low".to_string(), 0.0)].into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (class, w) in &self.priorities {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::config(
                    format!("sla.priorities.{class}"),
                    format!("weight must be > 0, got {w}"),
                ));
            }
        }
        for (class, eta) in &self.tolerances {
            if !(0.0..=1.0).contains(eta) {
                return Err(Error::config(
                    format!("sla.tolerances.{class}"),
                    format!("tolerance must be in [0, 1], got {eta}"),
                ));
            }
        }
        Ok(())
    }
}

/// Policy tuple handed to the xApp for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyProfile {
    pub episode_id: u32,
    pub valid_from: String,
    pub priorities: BTreeMap<String, f64>,
    pub fairness_scheme: FairnessScheme,
    pub tolerances: BTreeMap<String, f64>,
    pub coloring_scheme: ColoringScheme,
    pub numerology: u8,
}

impl PolicyProfile {
    pub fn weight(&self, class: &str) -> Result<f64> {
        self.priorities
            .get(class)
            .copied()
            .ok_or_else(|| Error::Policy(format!("no priority for UE class `{class}`")))
    }

    pub fn tolerance(&self, class: &str) -> Result<f64> {
        self.tolerances
            .get(class)
            .copied()
            .ok_or_else(|| Error::Policy(format!("no tolerance for UE class `{class}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.numerology > MAX_NUMEROLOGY {
            return Err(Error::Policy(format!(
                "numerology {} outside 0..={MAX_NUMEROLOGY}",
                self.numerology
            )));
        }
        if let Some((c, w)) = self.priorities.iter().find(|(_, w)| !(**w > 0.0)) {
            return Err(Error::Policy(format!("weight for `{c}` must be > 0, got {w}")));
        }
        if let Some((c, e)) = self
            .tolerances
            .iter()
            .find(|(_, e)| !(0.0..=1.0).contains(*e))
        {
            return Err(Error::Policy(format!("tolerance for `{c}` outside [0,1]: {e}")));
        }
        Ok(())
    }
}

/// Largest numerology whose PRB count still covers `headroom` times the
/// worst-case predicted load, or 0 when none does.
pub fn select_numerology(worst_load: f64, grid: GridParams, headroom: f64) -> u8 {
    // ceil with a small slack so 1.2 * 2.5 does not round up to 4
    let needed = (headroom * worst_load.max(0.0) - 1e-9).ceil().max(0.0) as usize;
    (0..=MAX_NUMEROLOGY)
        .rev()
        .find(|&mu| {
            prb_count(grid.total_bandwidth_hz, grid.guard_band_hz, mu)
                .map(|p| p >= needed)
                .unwrap_or(false)
        })
        .unwrap_or(0)
}

/// Static inputs of the rApp policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct RappSettings {
    pub grid: GridParams,
    pub sla: SlaConfig,
    pub coloring_scheme: ColoringScheme,
    pub fairness_scheme: FairnessScheme,
    pub headroom: f64,
    /// Pins the numerology instead of deriving it from forecasts.
    pub numerology_override: Option<u8>,
}

pub fn build_policy_profile(
    settings: &RappSettings,
    episode_id: u32,
    valid_from: String,
    forecasts: &BTreeMap<RuId, f64>,
    classes_in_use: &BTreeSet<String>,
) -> Result<PolicyProfile> {
    settings.sla.validate()?;
    let worst = worst_case(forecasts)
        .map_err(|_| Error::Policy("no forecasts available".into()))?;
    for class in classes_in_use {
        if !settings.sla.priorities.contains_key(class) {
            return Err(Error::Policy(format!("UE class `{class}` has no SLA priority")));
        }
        if !settings.sla.tolerances.contains_key(class) {
            return Err(Error::Policy(format!("UE class `{class}` has no SLA tolerance")));
        }
    }
    let numerology = match settings.numerology_override {
        Some(mu) => mu,
        None => select_numerology(worst, settings.grid, settings.headroom),
    };
    let profile = PolicyProfile {
        episode_id,
        valid_from,
        priorities: settings.sla.priorities.clone(),
        fairness_scheme: settings.fairness_scheme,
        tolerances: settings.sla.tolerances.clone(),
        coloring_scheme: settings.coloring_scheme,
        numerology,
    };
    profile.validate()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> RappSettings {
        RappSettings {
            grid: GridParams::default(),
            sla: SlaConfig::default(),
            coloring_scheme: ColoringScheme::WelshPowell,
            fairness_scheme: FairnessScheme::Mpf,
            headroom: DEFAULT_HEADROOM,
            numerology_override: None,
        }
    }

    #[test]
    fn numerology_examples() {
        let g = GridParams::default();
        assert_eq!(select_numerology(2.0, g, 1.2), 4);
        assert_eq!(select_numerology(50.0, g, 1.0), 0);
        assert_eq!(select_numerology(0.0, g, 1.2), 4);
        assert_eq!(select_numerology(2.5, g, 1.2), 4);
        assert_eq!(select_numerology(500.0, g, 1.2), 0);
        assert_eq!(select_numerology(10.0, g, 1.2), 2);
    }

    #[test]
    fn numerology_monotone_and_sufficient() {
        let g = GridParams::default();
        let mut prev = u8::MAX;
        for i in 0..2000 {
            let load = i as f64 * 0.05;
            let mu = select_numerology(load, g, 1.2);
            assert!(mu <= prev);
            prev = mu;
            let p = prb_count(g.total_bandwidth_hz, g.guard_band_hz, mu).unwrap();
            assert!(mu == 0 || p as f64 >= (1.2 * load - 1e-9).ceil());
        }
    }

    #[test]
    fn default_profile_is_uniform() {
        let forecasts: BTreeMap<RuId, f64> = [(RuId(0), 2.0), (RuId(1), 1.0)].into();
        let classes: BTreeSet<String> = ["standard".to_string()].into();
        let p = build_policy_profile(&settings(), 0, "96".into(), &forecasts, &classes).unwrap();
        assert_eq!(p.weight("standard").unwrap(), 1.0);
        assert_eq!(p.tolerance("standard").unwrap(), 0.0);
        assert_eq!(p.numerology, 4);
        assert_eq!(p.coloring_scheme, ColoringScheme::WelshPowell);
        assert_eq!(p.fairness_scheme, FairnessScheme::Mpf);
        let again = build_policy_profile(&settings(), 0, "96".into(), &forecasts, &classes).unwrap();
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn profile_errors() {
        let classes: BTreeSet<String> = ["standard".to_string()].into();
        assert!(build_policy_profile(&settings(), 0, "0".into(), &BTreeMap::new(), &classes).is_err());
        let gold: BTreeSet<String> = ["gold".to_string()].into();
        let f: BTreeMap<RuId, f64> = [(RuId(0), 1.0)].into();
        assert!(build_policy_profile(&settings(), 0, "0".into(), &f, &gold).is_err());
    }

    #[test]
    fn override_pins_numerology() {
        let mut s = settings();
        s.numerology_override = Some(1);
        let f: BTreeMap<RuId, f64> = [(RuId(0), 0.0)].into();
        let p = build_policy_profile(&s, 3, "0".into(), &f, &BTreeSet::new()).unwrap();
        assert_eq!(p.numerology, 1);
    }

    #[test]
    fn scheme_tokens_round_trip() {
        for c in ColoringScheme::ALL {
            assert_eq!(c.token().parse::<ColoringScheme>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.token()));
        }
        for f in FairnessScheme::ALL {
            assert_eq!(f.token().parse::<FairnessScheme>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.token()));
        }
        assert!("wp".parse::<ColoringScheme>().is_err());
    }
}

//! Scenario configuration: one JSON document, every field defaulted to the
//! reference deployment (one macro RU flanked by two micro RUs on a 10 MHz
//! carrier).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::RuId;
use crate::mobility::DEFAULT_MAX_TURN_RAD;
use crate::policy::{
    ColoringScheme, FairnessScheme, GridParams, SlaConfig, DEFAULT_HEADROOM,
};
use crate::radio::{prb_count, RuConfig, RuKind, MAX_NUMEROLOGY};
use crate::traffic::{
    validate_demand_mix, DemandMixEntry, ForecastConfig, PredictorKind, SAMPLES_PER_DAY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSource {
    Synthetic,
    Csv,
}

/// Diurnal load profile of one RU for the synthetic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfile {
    pub ru_id: RuId,
    pub base: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub source: TrafficSource,
    /// `timestamp,ru_id,load` file for the csv source.
    pub csv_path: Option<PathBuf>,
    pub synthetic_days: usize,
    pub profiles: Vec<SynthProfile>,
    /// Sample index of the first episode; earlier samples are history.
    pub first_episode_index: usize,
    /// Samples between consecutive episodes.
    pub episode_stride: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            source: TrafficSource::Synthetic,
            csv_path: None,
            synthetic_days: 2,
            profiles: vec![
                SynthProfile { ru_id: RuId(0), base: 5.0, amplitude: 3.0, noise_sd: 0.0 },
                SynthProfile { ru_id: RuId(1), base: 3.0, amplitude: 3.0, noise_sd: 0.0 },
                SynthProfile { ru_id: RuId(2), base: 3.0, amplitude: 3.0, noise_sd: 0.0 },
            ],
            first_episode_index: SAMPLES_PER_DAY,
            // one episode every three hours across the morning ramp
            episode_stride: 12,
        }
    }
}

impl TrafficConfig {
    /// Sample index feeding episode `e`.
    pub fn episode_index(&self, e: usize) -> usize {
        self.first_episode_index + e * self.episode_stride
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub rus: Vec<RuConfig>,
    pub grid: GridParams,
    pub noise_psd_dbm_per_hz: f64,
    pub episodes: usize,
    pub slots_per_episode: usize,
    pub slot_seconds: f64,
    pub ue_speed_mps: f64,
    pub max_turn_rad: f64,
    pub demand_mix: Vec<DemandMixEntry>,
    pub sla: SlaConfig,
    pub coloring_scheme: ColoringScheme,
    pub fairness_scheme: FairnessScheme,
    pub ewma_alpha: f64,
    /// Pins the numerology for every episode instead of letting the rApp
    /// pick it from forecasts.
    pub numerology_override: Option<u8>,
    pub headroom: f64,
    pub forecaster: ForecastConfig,
    pub traffic: TrafficConfig,
}

pub fn default_rus() -> Vec<RuConfig> {
    let micro = |id, x| RuConfig {
        id: RuId(id),
        kind: RuKind::Micro,
        position: [x, 0.0],
        radius_m: 50.0,
        prb_power_w: 0.01,
        max_power_w: 1.0,
        min_power_w: 0.001,
        pathloss_constant: 1.0,
        pathloss_exponent: 2.8,
    };
    vec![
        RuConfig {
            id: RuId(0),
            kind: RuKind::Macro,
            position: [0.0, 0.0],
            radius_m: 300.0,
            prb_power_w: 0.1,
            max_power_w: 20.0,
            min_power_w: 0.001,
            pathloss_constant: 1.0,
            pathloss_exponent: 2.7,
        },
        micro(1, 200.0),
        micro(2, -200.0),
    ]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        Self {
            seed: 1,
            rus: default_rus(),
            grid: GridParams::default(),
            noise_psd_dbm_per_hz: -174.0,
            episodes: 4,
            slots_per_episode: 100,
            slot_seconds: 1.0,
            ue_speed_mps: 1.5,
            max_turn_rad: DEFAULT_MAX_TURN_RAD,
            demand_mix: [0.5e6, 1.0e6, 1.5e6]
                .into_iter()
                .map(|d| DemandMixEntry {
                    demand_bps: d,
                    probability: third,
                    class: "standard".into(),
                })
                .collect(),
            sla: SlaConfig::default(),
            coloring_scheme: ColoringScheme::WelshPowell,
            fairness_scheme: FairnessScheme::Mpf,
            ewma_alpha: 0.1,
            numerology_override: None,
            headroom: DEFAULT_HEADROOM,
            forecaster: ForecastConfig {
                kind: PredictorKind::SeasonalNaive,
                lookback: 4,
                horizon: 1,
                predictions_path: None,
            },
            traffic: TrafficConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// The full-length reference run: a whole test day of 96 episodes of
    /// 900 one-second slots.
    pub fn full_scale() -> Self {
        let base = Self::default();
        Self {
            episodes: 96,
            slots_per_episode: 900,
            traffic: TrafficConfig {
                episode_stride: 1,
                ..base.traffic.clone()
            },
            ..base
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| json_error("", e))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| json_error("", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `key=value` overrides on dotted paths (`traffic.episode_stride=24`,
    /// `rus.0.prb_power_w=0.05`). Values parse as JSON, falling back to a
    /// plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| Error::config(set, "override must look like key=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
            set_path(&mut v, key, value)?;
        }
        Self::from_value(v)
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_value(self)
            .and_then(|v| serde_json::to_string(&v))
            .expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_json().as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    /// All issues found, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut issues: Vec<(String, String)> = Vec::new();
        let mut push = |path: &str, msg: String| issues.push((path.to_string(), msg));

        let max_prbs = match prb_count(self.grid.total_bandwidth_hz, self.grid.guard_band_hz, 0) {
            Ok(p) => Some(p),
            Err(e) => {
                push("grid", e.to_string());
                None
            }
        };
        if self.rus.is_empty() {
            push("rus", "at least one RU is required".into());
        }
        for (i, ru) in self.rus.iter().enumerate() {
            if self.rus[..i].iter().any(|r| r.id == ru.id) {
                push(&format!("rus[{i}].id"), format!("duplicate RU id {}", ru.id));
            }
            if let Some(p) = max_prbs {
                if let Err(msg) = ru.validate(p) {
                    push(&format!("rus[{i}]"), msg);
                }
            }
        }
        if !self.noise_psd_dbm_per_hz.is_finite() {
            push("noise_psd_dbm_per_hz", "must be finite".into());
        }
        if self.episodes < 1 {
            push("episodes", "must be >= 1".into());
        }
        if self.slots_per_episode < 1 {
            push("slots_per_episode", "must be >= 1".into());
        }
        if !(self.slot_seconds > 0.0) {
            push("slot_seconds", "must be > 0".into());
        }
        if !(self.ue_speed_mps >= 0.0) {
            push("ue_speed_mps", "must be >= 0".into());
        }
        if !(0.0..=PI).contains(&self.max_turn_rad) {
            push("max_turn_rad", "must be in [0, pi]".into());
        }
        if let Err(msg) = validate_demand_mix(&self.demand_mix) {
            push("demand_mix", msg);
        }
        if let Err(e) = self.sla.validate() {
            push_error(&mut push, "sla", e);
        }
        for (i, e) in self.demand_mix.iter().enumerate() {
            if !self.sla.priorities.contains_key(&e.class) {
                push(&format!("demand_mix[{i}].class"), format!("`{}` missing from sla.priorities", e.class));
            }
            if !self.sla.tolerances.contains_key(&e.class) {
                push(&format!("demand_mix[{i}].class"), format!("`{}` missing from sla.tolerances", e.class));
            }
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            push("ewma_alpha", "must be in (0, 1]".into());
        }
        if let Some(mu) = self.numerology_override {
            if mu > MAX_NUMEROLOGY {
                push("numerology_override", format!("must be <= {MAX_NUMEROLOGY}"));
            }
        }
        if !(self.headroom > 0.0) {
            push("headroom", "must be > 0".into());
        }
        if let Err(e) = self.forecaster.validate() {
            push_error(&mut push, "forecaster", e);
        }
        self.validate_traffic(&mut push);

        if issues.is_empty() {
            return Ok(());
        }
        let path = issues
            .iter()
            .map(|(p, _)| p.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        let message = issues
            .iter()
            .map(|(p, m)| format!("{p}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Config { path, message })
    }

    fn validate_traffic(&self, push: &mut impl FnMut(&str, String)) {
        let t = &self.traffic;
        if t.episode_stride < 1 {
            push("traffic.episode_stride", "must be >= 1".into());
        }
        // the first forecast is made from samples up to index first - 1
        let needed = self.forecaster.lookback + self.forecaster.horizon - 1;
        if t.first_episode_index < needed {
            push(
                "traffic.first_episode_index",
                format!("must be >= lookback + horizon - 1 = {needed} to leave enough history"),
            );
        }
        match t.source {
            TrafficSource::Csv => {
                if t.csv_path.is_none() {
                    push("traffic.csv_path", "required for the csv source".into());
                }
            }
            TrafficSource::Synthetic => {
                if t.synthetic_days < 1 {
                    push("traffic.synthetic_days", "must be >= 1".into());
                }
                let last = t.episode_index(self.episodes.saturating_sub(1));
                if last >= t.synthetic_days * SAMPLES_PER_DAY {
                    push(
                        "traffic.synthetic_days",
                        format!(
                            "last episode reads sample {last}, past the {}-sample series",
                            t.synthetic_days * SAMPLES_PER_DAY
                        ),
                    );
                }
                for ru in &self.rus {
                    if !t.profiles.iter().any(|p| p.ru_id == ru.id) {
                        push("traffic.profiles", format!("no profile for RU {}", ru.id));
                    }
                }
                for (i, p) in t.profiles.iter().enumerate() {
                    if !self.rus.iter().any(|r| r.id == p.ru_id) {
                        push(&format!("traffic.profiles[{i}].ru_id"), format!("unknown RU {}", p.ru_id));
                    }
                    if !(p.amplitude >= 0.0 && p.base >= p.amplitude) {
                        push(
                            &format!("traffic.profiles[{i}]"),
                            "need base >= amplitude >= 0".into(),
                        );
                    }
                    if !(p.noise_sd >= 0.0) {
                        push(&format!("traffic.profiles[{i}].noise_sd"), "must be >= 0".into());
                    }
                }
            }
        }
    }
}

fn push_error(push: &mut impl FnMut(&str, String), fallback: &str, e: Error) {
    match e {
        Error::Config { path, message } => push(&path, message),
        other => push(fallback, other.to_string()),
    }
}

fn json_error(path: &str, e: serde_json::Error) -> Error {
    Error::config(path, e.to_string())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(Error::config(key, format!("unknown key `{part}`")));
                }
                if last {
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                map.get_mut(*part).expect("checked above")
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(key, format!("index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(key, format!("cannot descend into `{part}`"))),
        };
    }
    Err(Error::config(key, "empty key"))
}

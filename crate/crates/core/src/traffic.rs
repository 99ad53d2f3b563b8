//! Per-RU load series at 15-minute granularity: CSV ingestion, a synthetic
//! diurnal generator, baseline forecasters and the load-to-population map.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::RuId;
use crate::mobility::uniform_in_disc;
use crate::radio::RuConfig;

pub const SAMPLES_PER_DAY: usize = 96;
pub const SAMPLE_SPACING_SECS: i64 = 15 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeKey {
    Index(i64),
    Time(NaiveDateTime),
}

impl TimeKey {
    pub fn parse(s: &str) -> Option<TimeKey> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Some(TimeKey::Index(i));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(TimeKey::Time(dt.naive_utc()));
        }
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(TimeKey::Time(dt));
            }
        }
        None
    }

    fn same_kind(&self, other: &TimeKey) -> bool {
        matches!(
            (self, other),
            (TimeKey::Index(_), TimeKey::Index(_)) | (TimeKey::Time(_), TimeKey::Time(_))
        )
    }

    /// The key one sample later.
    pub fn next(&self) -> TimeKey {
        self.offset(1)
    }

    pub fn offset(&self, samples: i64) -> TimeKey {
        match *self {
            TimeKey::Index(i) => TimeKey::Index(i + samples),
            TimeKey::Time(t) => {
                TimeKey::Time(t + chrono::Duration::seconds(SAMPLE_SPACING_SECS * samples))
            }
        }
    }
}

impl fmt::Display for TimeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeKey::Index(i) => write!(f, "{i}"),
            TimeKey::Time(t) => write!(f, "{}", t.format("%Y-%m-%dT%H:%M:%S")),
        }
    }
}

/// Load samples of one RU, uniformly spaced 15 minutes apart.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSeries {
    ru_id: RuId,
    start: TimeKey,
    loads: Vec<f64>,
}

impl TrafficSeries {
    pub fn new(ru_id: RuId, start: TimeKey, loads: Vec<f64>) -> Result<Self> {
        if loads.is_empty() {
            return Err(Error::Traffic(format!("RU {ru_id}: no samples")));
        }
        if let Some(bad) = loads.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Traffic(format!("RU {ru_id}: invalid load {bad}")));
        }
        Ok(Self { ru_id, start, loads })
    }

    /// Builds a series from explicit timestamps, checking uniform spacing.
    pub fn from_samples(ru_id: RuId, samples: &[(TimeKey, f64)]) -> Result<Self> {
        let Some(&(start, _)) = samples.first() else {
            return Err(Error::Traffic(format!("RU {ru_id}: no samples")));
        };
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].0 != w[0].0.next() {
                return Err(Error::Traffic(format!(
                    "RU {ru_id}: sample {} at {} does not follow {} by 15 minutes",
                    i + 1,
                    w[1].0,
                    w[0].0
                )));
            }
        }
        Self::new(ru_id, start, samples.iter().map(|s| s.1).collect())
    }

    pub fn ru_id(&self) -> RuId {
        self.ru_id
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> TimeKey {
        self.start.offset(index as i64)
    }

    pub fn start(&self) -> TimeKey {
        self.start
    }
}

fn csv_line(pos: Option<&csv::Position>) -> u64 {
    pos.map(|p| p.line()).unwrap_or(0)
}

fn parse_ru(field: &str, line: u64) -> Result<RuId> {
    field
        .trim()
        .parse::<u32>()
        .map(RuId)
        .map_err(|_| Error::Csv {
            line,
            message: format!("bad ru_id `{field}`"),
        })
}

fn parse_load(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
        line,
        message: format!("bad {what} `{field}`"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Csv {
            line,
            message: format!("{what} must be a finite non-negative number, got {v}"),
        });
    }
    Ok(v)
}

/// Reads `(timestamp, ru_id, value)` rows with the given header names.
fn read_rows<R: Read>(
    reader: R,
    header: [&str; 3],
    known_rus: &[RuId],
) -> Result<Vec<(u64, TimeKey, RuId, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != header {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header `{}`, got `{}`", header.join(","), got.join(",")),
        });
    }
    let known: BTreeSet<RuId> = known_rus.iter().copied().collect();
    let mut rows = Vec::new();
    let mut kind: Option<TimeKey> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            line: csv_line(e.position()),
            message: e.to_string(),
        })?;
        let line = csv_line(rec.position());
        if rec.len() != 3 {
            return Err(Error::Csv {
                line,
                message: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let ts = TimeKey::parse(&rec[0]).ok_or_else(|| Error::Csv {
            line,
            message: format!("bad timestamp `{}`", &rec[0]),
        })?;
        match &kind {
            None => kind = Some(ts),
            Some(k) if !k.same_kind(&ts) => {
                return Err(Error::Csv {
                    line,
                    message: "mixed ISO-8601 and integer timestamps".into(),
                })
            }
            _ => {}
        }
        let ru = parse_ru(&rec[1], line)?;
        if !known.is_empty() && !known.contains(&ru) {
            return Err(Error::Csv {
                line,
                message: format!("unknown ru_id {ru}"),
            });
        }
        let value = parse_load(&rec[2], line, header[2])?;
        rows.push((line, ts, ru, value));
    }
    if rows.is_empty() {
        return Err(Error::Traffic("no samples".into()));
    }
    Ok(rows)
}

/// Parses `timestamp,ru_id,load` CSV text into one series per RU.
/// An empty `known_rus` accepts any RU id.
pub fn parse_traffic_csv<R: Read>(
    reader: R,
    known_rus: &[RuId],
) -> Result<BTreeMap<RuId, TrafficSeries>> {
    let rows = read_rows(reader, ["timestamp", "ru_id", "load"], known_rus)?;
    let mut grouped: BTreeMap<RuId, Vec<(u64, TimeKey, f64)>> = BTreeMap::new();
    for (line, ts, ru, load) in rows {
        grouped.entry(ru).or_default().push((line, ts, load));
    }
    let mut out = BTreeMap::new();
    for (ru, samples) in grouped {
        for w in samples.windows(2) {
            if w[1].1 != w[0].1.next() {
                return Err(Error::Csv {
                    line: w[1].0,
                    message: format!(
                        "RU {ru}: timestamp {} does not follow {} by one 15-minute step",
                        w[1].1, w[0].1
                    ),
                });
            }
        }
        let pairs: Vec<(TimeKey, f64)> = samples.iter().map(|s| (s.1, s.2)).collect();
        out.insert(ru, TrafficSeries::from_samples(ru, &pairs)?);
    }
    Ok(out)
}

pub fn ingest_csv(path: &Path, known_rus: &[RuId]) -> Result<BTreeMap<RuId, TrafficSeries>> {
    let file = std::fs::File::open(path)?;
    parse_traffic_csv(file, known_rus)
}

/// Synthetic day-periodic load: trough at the first sample of each day,
/// peak at mid-day, optional Gaussian noise, clipped at zero.
pub fn synth_diurnal<R: Rng + ?Sized>(
    ru_id: RuId,
    days: usize,
    base: f64,
    amplitude: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<TrafficSeries> {
    if days < 1 {
        return Err(Error::InvalidArgument("days must be >= 1".into()));
    }
    if !(amplitude >= 0.0 && base >= amplitude) {
        return Err(Error::InvalidArgument(format!(
            "need base >= amplitude >= 0, got base {base}, amplitude {amplitude}"
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_sd {noise_sd} < 0")));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let loads = (0..days * SAMPLES_PER_DAY)
        .map(|t| {
            let phase = 2.0 * PI * (t % SAMPLES_PER_DAY) as f64 / SAMPLES_PER_DAY as f64 - PI / 2.0;
            let eps = if noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
            (base + amplitude * phase.sin() + eps).max(0.0)
        })
        .collect();
    TrafficSeries::new(ru_id, TimeKey::Index(0), loads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    SeasonalNaive,
    MovingAverage,
    PluggableExternal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub kind: PredictorKind,
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Prediction file for [`PredictorKind::PluggableExternal`].
    #[serde(default)]
    pub predictions_path: Option<PathBuf>,
}

fn default_horizon() -> usize {
    1
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::SeasonalNaive,
            lookback: 4,
            horizon: 1,
            predictions_path: None,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback < 1 {
            return Err(Error::config("forecaster.lookback", "must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(Error::config("forecaster.horizon", "must be >= 1"));
        }
        if self.kind == PredictorKind::PluggableExternal && self.predictions_path.is_none() {
            return Err(Error::config(
                "forecaster.predictions_path",
                "required for the pluggable-external predictor",
            ));
        }
        Ok(())
    }
}

/// Predicts `lambda(t + horizon)` from samples up to and including `t`.
pub trait Forecaster {
    fn predict(&self, series: &TrafficSeries, t: usize, horizon: usize) -> Result<f64>;
}

fn check_history(series: &TrafficSeries, t: usize, lookback: usize) -> Result<()> {
    if t >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "index {t} beyond series of length {}",
            series.len()
        )));
    }
    if t + 1 < lookback {
        return Err(Error::InsufficientHistory {
            needed: lookback,
            available: t + 1,
        });
    }
    Ok(())
}

/// Same slot one day earlier, or the last observation when a full day of
/// history is not yet available.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    pub lookback: usize,
    pub period: usize,
}

impl Forecaster for SeasonalNaive {
    fn predict(&self, series: &TrafficSeries, t: usize, horizon: usize) -> Result<f64> {
        check_history(series, t, self.lookback)?;
        let target = t + horizon;
        match target.checked_sub(self.period) {
            Some(idx) if idx <= t => Ok(series.loads[idx]),
            _ => Ok(series.loads[t]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MovingAverage {
    pub lookback: usize,
}

impl Forecaster for MovingAverage {
    fn predict(&self, series: &TrafficSeries, t: usize, _horizon: usize) -> Result<f64> {
        check_history(series, t, self.lookback)?;
        let window = &series.loads[t + 1 - self.lookback..=t];
        Ok(window.iter().sum::<f64>() / window.len() as f64)
    }
}

/// Predictions supplied by an external model, keyed by RU and target time.
#[derive(Debug, Clone, Default)]
pub struct ExternalPredictions {
    pub lookback: usize,
    table: BTreeMap<(RuId, TimeKey), f64>,
}

impl ExternalPredictions {
    pub fn parse<R: Read>(reader: R, lookback: usize) -> Result<Self> {
        let rows = read_rows(reader, ["timestamp", "ru_id", "predicted_load"], &[])?;
        let mut table = BTreeMap::new();
        for (line, ts, ru, v) in rows {
            if table.insert((ru, ts), v).is_some() {
                return Err(Error::Csv {
                    line,
                    message: format!("duplicate prediction for RU {ru} at {ts}"),
                });
            }
        }
        Ok(Self { lookback, table })
    }

    pub fn load(path: &Path, lookback: usize) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?, lookback)
    }
}

impl Forecaster for ExternalPredictions {
    fn predict(&self, series: &TrafficSeries, t: usize, horizon: usize) -> Result<f64> {
        check_history(series, t, self.lookback)?;
        let key = series.timestamp(t + horizon);
        self.table
            .get(&(series.ru_id(), key))
            .copied()
            .ok_or_else(|| {
                Error::Traffic(format!(
                    "no external prediction for RU {} at {key}",
                    series.ru_id()
                ))
            })
    }
}

/// Instantiates the configured predictor.
pub fn build_forecaster(cfg: &ForecastConfig) -> Result<Box<dyn Forecaster + Send + Sync>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        PredictorKind::SeasonalNaive => Box::new(SeasonalNaive {
            lookback: cfg.lookback,
            period: SAMPLES_PER_DAY,
        }),
        PredictorKind::MovingAverage => Box::new(MovingAverage {
            lookback: cfg.lookback,
        }),
        PredictorKind::PluggableExternal => Box::new(ExternalPredictions::load(
            cfg.predictions_path.as_deref().expect("validated"),
            cfg.lookback,
        )?),
    })
}

pub fn forecast(series: &TrafficSeries, cfg: &ForecastConfig, t: usize) -> Result<f64> {
    build_forecaster(cfg)?.predict(series, t, cfg.horizon)
}

/// Largest predicted load across RUs.
pub fn worst_case(predictions: &BTreeMap<RuId, f64>) -> Result<f64> {
    predictions
        .values()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::InvalidArgument("no predictions".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandMixEntry {
    pub demand_bps: f64,
    pub probability: f64,
    #[serde(default = "default_class")]
    pub class: String,
}

pub fn default_class() -> String {
    "standard".to_string()
}

pub fn validate_demand_mix(mix: &[DemandMixEntry]) -> std::result::Result<(), String> {
    if mix.is_empty() {
        return Err("demand mix is empty".into());
    }
    for (i, e) in mix.iter().enumerate() {
        if !(e.demand_bps > 0.0) {
            return Err(format!("entry {i}: demand_bps must be > 0"));
        }
        if !(e.probability >= 0.0) {
            return Err(format!("entry {i}: probability must be >= 0"));
        }
    }
    let total: f64 = mix.iter().map(|e| e.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("probabilities sum to {total}, expected 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeDescriptor {
    pub demand_bps: f64,
    pub class: String,
    pub position: [f64; 2],
}

/// Round half up; loads are non-negative.
pub fn ue_count(load: f64) -> usize {
    (load + 0.5).floor().max(0.0) as usize
}

/// Spawns `round(load)` UEs uniformly in the RU's disc with demands drawn
/// from the mix.
pub fn load_to_population<R: Rng + ?Sized>(
    load: f64,
    mix: &[DemandMixEntry],
    ru: &RuConfig,
    rng: &mut R,
) -> Vec<UeDescriptor> {
    (0..ue_count(load))
        .map(|_| {
            let entry = draw_demand(mix, rng);
            UeDescriptor {
                demand_bps: entry.demand_bps,
                class: entry.class.clone(),
                position: uniform_in_disc(ru, rng),
            }
        })
        .collect()
}

fn draw_demand<'a, R: Rng + ?Sized>(mix: &'a [DemandMixEntry], rng: &mut R) -> &'a DemandMixEntry {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for e in mix {
        acc += e.probability;
        if u < acc {
            return e;
        }
    }
    mix.last().expect("non-empty demand mix")
}

pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predicted vs {} actual",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predicted.len() as f64)
}

/// Min-max scaler fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    pub fn apply(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

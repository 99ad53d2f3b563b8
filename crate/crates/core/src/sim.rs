//! Nested closed loop: once per episode the rApp forecasts load and issues
//! a policy over A1; once per slot the RAN side moves UEs, draws fading,
//! sends an E2 report and applies the xApp's E2 control.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, SynthProfile, TrafficSource};
use crate::control::{A1Policy, E2Control, E2Report, E2Setup, Message, O1Report, Transport};
use crate::error::{Error, Result};
use crate::ids::{RuId, UeId};
use crate::metrics::{jain_fairness, service_shares, success_rate, SlotRecord, UeOutcome};
use crate::mobility::{self, MobilityState};
use crate::policy::{build_policy_profile, ColoringScheme, FairnessScheme, RappSettings};
use crate::radio::{
    is_satisfied, noise_power, sample_fading, LinkState, RadioSnapshot, RuTx, SpectrumGrid,
    UeRadio,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::traffic::{
    build_forecaster, ingest_csv, load_to_population, synth_diurnal, DemandMixEntry, MinMax,
    TrafficSeries,
};
use crate::xapp::Xapp;

/// Where the xApp runs: in this process or behind a transport.
pub trait XappLink {
    fn setup(&mut self, msg: &E2Setup) -> Result<()>;
    fn policy(&mut self, msg: &A1Policy) -> Result<()>;
    fn report(&mut self, msg: &E2Report) -> Result<E2Control>;
    fn close(&mut self) -> Result<()>;
}

#[derive(Default)]
pub struct InProcess {
    xapp: Option<Xapp>,
}

impl InProcess {
    fn xapp(&mut self) -> Result<&mut Xapp> {
        self.xapp
            .as_mut()
            .ok_or_else(|| Error::Codec("xApp used before setup".into()))
    }
}

impl XappLink for InProcess {
    fn setup(&mut self, msg: &E2Setup) -> Result<()> {
        self.xapp = Some(Xapp::new(msg)?);
        Ok(())
    }

    fn policy(&mut self, msg: &A1Policy) -> Result<()> {
        self.xapp()?.apply_policy(msg)
    }

    fn report(&mut self, msg: &E2Report) -> Result<E2Control> {
        self.xapp()?.handle_report(msg)
    }

    fn close(&mut self) -> Result<()> {
        Ok(())
    }
}

/// xApp reached through a message transport (loopback or TCP).
pub struct Remote<T: Transport> {
    transport: T,
}

impl<T: Transport> Remote<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }
}

impl<T: Transport> XappLink for Remote<T> {
    fn setup(&mut self, msg: &E2Setup) -> Result<()> {
        self.transport.send(&Message::E2Setup(msg.clone()))
    }

    fn policy(&mut self, msg: &A1Policy) -> Result<()> {
        self.transport.send(&Message::A1Policy(msg.clone()))
    }

    fn report(&mut self, msg: &E2Report) -> Result<E2Control> {
        self.transport.send(&Message::E2Report(msg.clone()))?;
        match self.transport.recv()? {
            Message::E2Control(c) => Ok(c),
            Message::Error { message } => Err(Error::Transport(format!("xApp failed: {message}"))),
            other => Err(Error::Codec(format!(
                "expected e2_control, got {}",
                crate::control::message_type(&other)
            ))),
        }
    }

    fn close(&mut self) -> Result<()> {
        self.transport.send(&Message::Shutdown)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub sample_index: usize,
    pub numerology: u8,
    pub prb_count: usize,
    pub worst_case_forecast: f64,
    pub ue_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub success_rate_pct: f64,
    pub jfi_pct: f64,
    pub ue_count: usize,
    pub slot_count: usize,
    pub preemptions: usize,
    /// Mean squared error of the per-RU forecasts, each RU min-max scaled
    /// on its history before the first episode.
    pub forecast_mse: Option<f64>,
    pub episodes: Vec<EpisodeSummary>,
    pub service_shares: BTreeMap<UeId, f64>,
}

impl RunSummary {
    pub fn numerology_trace(&self) -> Vec<u8> {
        self.episodes.iter().map(|e| e.numerology).collect()
    }

    pub fn from_records(records: &[SlotRecord], episodes: Vec<EpisodeSummary>, forecast_mse: Option<f64>) -> Result<Self> {
        let shares = service_shares(records);
        let share_values: Vec<f64> = shares.values().copied().collect();
        let jfi_pct = if share_values.is_empty() {
            100.0
        } else {
            jain_fairness(&share_values)?
        };
        Ok(Self {
            success_rate_pct: success_rate(records),
            jfi_pct,
            ue_count: shares.len(),
            slot_count: records.len(),
            preemptions: records.iter().map(|r| r.preemptions).sum(),
            forecast_mse,
            episodes,
            service_shares: shares,
        })
    }
}

/// Per-RU load series for the scenario, covering every episode.
pub fn load_traffic(cfg: &ScenarioConfig) -> Result<BTreeMap<RuId, TrafficSeries>> {
    let ru_ids: Vec<RuId> = cfg.rus.iter().map(|r| r.id).collect();
    let series = match cfg.traffic.source {
        TrafficSource::Synthetic => cfg
            .traffic
            .profiles
            .iter()
            .map(|p: &SynthProfile| {
                let mut rng = stream_rng(cfg.seed, Stream::Traffic, &[u64::from(p.ru_id.0)]);
                let s = synth_diurnal(
                    p.ru_id,
                    cfg.traffic.synthetic_days,
                    p.base,
                    p.amplitude,
                    p.noise_sd,
                    &mut rng,
                )?;
                Ok((p.ru_id, s))
            })
            .collect::<Result<BTreeMap<_, _>>>()?,
        TrafficSource::Csv => {
            let path = cfg
                .traffic
                .csv_path
                .as_deref()
                .ok_or_else(|| Error::config("traffic.csv_path", "required for the csv source"))?;
            ingest_csv(path, &ru_ids)?
        }
    };
    let last = cfg.traffic.episode_index(cfg.episodes - 1);
    for ru in &ru_ids {
        let s = series
            .get(ru)
            .ok_or_else(|| Error::Traffic(format!("no traffic for RU {ru}")))?;
        if last >= s.len() {
            return Err(Error::Traffic(format!(
                "RU {ru}: episode {} needs sample {last}, series has {}",
                cfg.episodes - 1,
                s.len()
            )));
        }
    }
    Ok(series)
}

struct Ue {
    id: UeId,
    ru: usize,
    demand_bps: f64,
    class: String,
    mobility: MobilityState,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunSummary, Vec<SlotRecord>)> {
    run_with_xapp(cfg, &mut InProcess::default())
}

pub fn run_with_xapp(
    cfg: &ScenarioConfig,
    xapp: &mut dyn XappLink,
) -> Result<(RunSummary, Vec<SlotRecord>)> {
    cfg.validate()?;
    let traffic = load_traffic(cfg)?;
    let forecaster = build_forecaster(&cfg.forecaster)?;
    let settings = RappSettings {
        grid: cfg.grid,
        sla: cfg.sla.clone(),
        coloring_scheme: cfg.coloring_scheme,
        fairness_scheme: cfg.fairness_scheme,
        headroom: cfg.headroom,
        numerology_override: cfg.numerology_override,
    };
    let classes: BTreeSet<String> = cfg.demand_mix.iter().map(|e| e.class.clone()).collect();
    let history_end = cfg.traffic.first_episode_index;
    let scalers: BTreeMap<RuId, MinMax> = traffic
        .iter()
        .map(|(ru, s)| (*ru, MinMax::fit(&s.loads()[..history_end.min(s.len())])))
        .collect();

    xapp.setup(&E2Setup {
        ewma_alpha: cfg.ewma_alpha,
    })?;

    let mut records = Vec::with_capacity(cfg.episodes * cfg.slots_per_episode);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut sq_errors = Vec::new();
    let mut next_ue = 0u32;
    let horizon = cfg.forecaster.horizon;

    for e in 0..cfg.episodes {
        let episode = e as u32;
        let t_e = cfg.traffic.episode_index(e);

        // rApp: O1 window up to the sample before the episode, forecast,
        // policy over A1
        let window = O1Report::from_series(&traffic, t_e).to_series()?;
        let mut forecasts = BTreeMap::new();
        for (ru, history) in &window {
            let pred = forecaster.predict(history, t_e - horizon, horizon)?;
            let sc = scalers[ru];
            sq_errors.push((sc.apply(pred) - sc.apply(traffic[ru].loads()[t_e])).powi(2));
            forecasts.insert(*ru, pred);
        }
        let valid_from = traffic
            .values()
            .next()
            .map(|s| s.timestamp(t_e).to_string())
            .unwrap_or_default();
        let policy = build_policy_profile(&settings, episode, valid_from, &forecasts, &classes)?;
        xapp.policy(&A1Policy {
            episode_id: episode,
            policy: policy.clone(),
        })?;

        let grid = SpectrumGrid::new(cfg.grid.total_bandwidth_hz, cfg.grid.guard_band_hz, policy.numerology)?;
        let noise_w = noise_power(cfg.noise_psd_dbm_per_hz, grid.prb_bandwidth_hz);

        // repopulate from the realized load
        let mut ues = Vec::new();
        for (ri, ru) in cfg.rus.iter().enumerate() {
            let mut rng = stream_rng(cfg.seed, Stream::Population, &[e as u64, u64::from(ru.id.0)]);
            let load = traffic[&ru.id].loads()[t_e];
            for d in load_to_population(load, &cfg.demand_mix, ru, &mut rng) {
                let heading = rng.random_range(-PI..PI);
                ues.push(Ue {
                    id: UeId(next_ue),
                    ru: ri,
                    demand_bps: d.demand_bps,
                    class: d.class,
                    mobility: MobilityState {
                        position: d.position,
                        heading,
                        speed_mps: cfg.ue_speed_mps,
                    },
                });
                next_ue += 1;
            }
        }
        episodes.push(EpisodeSummary {
            episode,
            sample_index: t_e,
            numerology: policy.numerology,
            prb_count: grid.prb_count,
            worst_case_forecast: forecasts.values().copied().fold(0.0, f64::max),
            ue_count: ues.len(),
        });
        log::info!(
            "episode {e}: sample {t_e}, mu={} ({} PRBs), {} UEs",
            policy.numerology,
            grid.prb_count,
            ues.len()
        );

        let mut move_rng = stream_rng(cfg.seed, Stream::Mobility, &[e as u64]);
        let rus_tx: Vec<RuTx> = cfg
            .rus
            .iter()
            .map(|r| RuTx {
                id: r.id,
                prb_power_w: r.prb_power_w,
            })
            .collect();

        for s in 0..cfg.slots_per_episode {
            for ue in &mut ues {
                ue.mobility = mobility::step(
                    ue.mobility,
                    &cfg.rus[ue.ru],
                    cfg.slot_seconds,
                    cfg.max_turn_rad,
                    &mut move_rng,
                );
            }
            let mut fade_rng = stream_rng(cfg.seed, Stream::Fading, &[e as u64, s as u64]);
            let snapshot = RadioSnapshot {
                prb_count: grid.prb_count,
                prb_bandwidth_hz: grid.prb_bandwidth_hz,
                noise_power_w: noise_w,
                rus: rus_tx.clone(),
                ues: ues
                    .iter()
                    .map(|ue| UeRadio {
                        id: ue.id,
                        serving_ru: cfg.rus[ue.ru].id,
                        class: ue.class.clone(),
                        demand_bps: ue.demand_bps,
                        position: ue.mobility.position,
                        links: cfg
                            .rus
                            .iter()
                            .map(|ru| {
                                let fading = (0..grid.prb_count)
                                    .map(|_| sample_fading(&mut fade_rng))
                                    .collect();
                                LinkState::new(ru, ue.id, ue.mobility.position, fading)
                            })
                            .collect(),
                    })
                    .collect(),
            };
            let report = E2Report {
                episode_id: episode,
                slot_id: s as u32,
                global_slot: (e * cfg.slots_per_episode + s) as i64,
                coloring_seed: derive_seed(cfg.seed, Stream::Coloring, &[e as u64, s as u64]),
                snapshot,
            };
            let ctrl = xapp.report(&report)?;
            records.push(realize(&report, &ctrl, &policy)?);
        }
    }
    xapp.close()?;

    let mse = if sq_errors.is_empty() {
        None
    } else {
        Some(sq_errors.iter().sum::<f64>() / sq_errors.len() as f64)
    };
    let summary = RunSummary::from_records(&records, episodes, mse)?;
    Ok((summary, records))
}

/// Applies an E2 control on the RAN side and scores every UE with the
/// full interference of the final assignment.
fn realize(
    report: &E2Report,
    ctrl: &E2Control,
    policy: &crate::policy::PolicyProfile,
) -> Result<SlotRecord> {
    let snap = &report.snapshot;
    if ctrl.slot_id != report.slot_id || ctrl.episode_id != report.episode_id {
        return Err(Error::Codec(format!(
            "E2 control for slot {}/{} answers report {}/{}",
            ctrl.episode_id, ctrl.slot_id, report.episode_id, report.slot_id
        )));
    }
    let assignment = ctrl.validate()?;
    for (u, ru, prb) in assignment.iter() {
        let ue = snap.ue(u)?;
        if ue.serving_ru != ru || prb >= snap.prb_count {
            return Err(Error::AssignmentConflict(format!(
                "UE {u} given PRB {prb} on RU {ru}; serves from RU {} with {} PRBs",
                ue.serving_ru, snap.prb_count
            )));
        }
    }
    let preempted: BTreeSet<UeId> = ctrl.preempted.iter().copied().collect();
    let mut ues = Vec::with_capacity(snap.ues.len());
    for ue in &snap.ues {
        let rate_bps = snap.ue_total_rate(ue.id, &assignment)?;
        let prb = assignment.prb_of(ue.id);
        ues.push(UeOutcome {
            ue: ue.id,
            ru: ue.serving_ru,
            prb,
            rate_bps,
            satisfied: prb.is_some()
                && is_satisfied(rate_bps, ue.demand_bps, policy.tolerance(&ue.class)?),
            preempted: preempted.contains(&ue.id),
        });
    }
    Ok(SlotRecord {
        episode: report.episode_id,
        slot: report.slot_id,
        numerology: policy.numerology,
        ues,
        colored: ctrl.colored,
        uncolored: ctrl.uncolored,
        preemptions: preempted.len(),
    })
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Numerology,
    Demand,
    ColoringScheme,
    FairnessScheme,
    UeCount,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::Numerology,
        SweepAxis::Demand,
        SweepAxis::ColoringScheme,
        SweepAxis::FairnessScheme,
        SweepAxis::UeCount,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            SweepAxis::Numerology => "numerology",
            SweepAxis::Demand => "demand",
            SweepAxis::ColoringScheme => "coloring-scheme",
            SweepAxis::FairnessScheme => "fairness-scheme",
            SweepAxis::UeCount => "ue-count",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    ///
    /// `demand` is in bit/s and replaces the demand mix with a single
    /// entry; `ue-count` is the total UE count, spread evenly over the RUs
    /// as a constant load.
    pub fn apply(&self, base: &ScenarioConfig, value: &str) -> Result<ScenarioConfig> {
        let bad = |msg: String| Error::config(self.token(), msg);
        let mut cfg = base.clone();
        match self {
            SweepAxis::Numerology => {
                let mu: u8 = value.parse().map_err(|_| bad(format!("`{value}` is not a numerology")))?;
                cfg.numerology_override = Some(mu);
            }
            SweepAxis::Demand => {
                let d: f64 = value.parse().map_err(|_| bad(format!("`{value}` is not a demand")))?;
                let class = base
                    .demand_mix
                    .first()
                    .map(|e| e.class.clone())
                    .unwrap_or_else(crate::traffic::default_class);
                cfg.demand_mix = vec![DemandMixEntry {
                    demand_bps: d,
                    probability: 1.0,
                    class,
                }];
            }
            SweepAxis::ColoringScheme => {
                cfg.coloring_scheme = ColoringScheme::from_str(value).map_err(|e| bad(e.to_string()))?;
            }
            SweepAxis::FairnessScheme => {
                cfg.fairness_scheme = FairnessScheme::from_str(value).map_err(|e| bad(e.to_string()))?;
            }
            SweepAxis::UeCount => {
                let n: f64 = value.parse().map_err(|_| bad(format!("`{value}` is not a UE count")))?;
                if !(n >= 0.0) {
                    return Err(bad(format!("UE count {n} < 0")));
                }
                let per_ru = n / cfg.rus.len() as f64;
                cfg.traffic.source = TrafficSource::Synthetic;
                cfg.traffic.profiles = cfg
                    .rus
                    .iter()
                    .map(|r| SynthProfile {
                        ru_id: r.id,
                        base: per_ru,
                        amplitude: 0.0,
                        noise_sd: 0.0,
                    })
                    .collect();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.token() == s)
            .ok_or_else(|| Error::config("axis", format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub timestamp: String,
    pub ru_id: RuId,
    pub actual: f64,
    pub predicted: f64,
}

/// The rApp's view of one test sample: aggregate loads and the numerology
/// it would pick from the worst-case prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDecision {
    pub timestamp: String,
    pub actual_total: f64,
    pub predicted_total: f64,
    pub worst_case_predicted: f64,
    pub numerology: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEvaluation {
    pub test_len: usize,
    /// MSE over all RUs after min-max scaling each RU on its training split.
    pub mse_normalized: f64,
    pub mse_normalized_per_ru: BTreeMap<RuId, f64>,
    pub points: Vec<ForecastPoint>,
    pub decisions: Vec<ForecastDecision>,
}

/// Scores a forecaster on the last `test_len` samples of every series,
/// training the scaler on everything before them.
pub fn evaluate_forecaster(
    series: &BTreeMap<RuId, TrafficSeries>,
    forecast: &crate::traffic::ForecastConfig,
    test_len: usize,
    grid: crate::policy::GridParams,
    headroom: f64,
) -> Result<ForecastEvaluation> {
    let forecaster = build_forecaster(forecast)?;
    let first = series
        .values()
        .next()
        .ok_or_else(|| Error::Traffic("no series to evaluate".into()))?;
    let len = first.len();
    if series.values().any(|s| s.len() != len || s.start() != first.start()) {
        return Err(Error::Traffic("series must share start time and length".into()));
    }
    if test_len == 0 || test_len >= len {
        return Err(Error::InvalidArgument(format!(
            "test split of {test_len} samples needs 1..{len}"
        )));
    }
    let test_start = len - test_len;
    let h = forecast.horizon;
    if test_start < h || test_start - h + 1 < forecast.lookback {
        return Err(Error::InsufficientHistory {
            needed: forecast.lookback + h - 1,
            available: test_start,
        });
    }
    let mut points = Vec::with_capacity(test_len * series.len());
    let mut decisions = Vec::with_capacity(test_len);
    let mut per_ru: BTreeMap<RuId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in test_start..len {
        let mut worst = BTreeMap::new();
        let (mut actual_total, mut predicted_total) = (0.0, 0.0);
        for (ru, s) in series {
            let predicted = forecaster.predict(s, t - h, h)?;
            let actual = s.loads()[t];
            let sc = MinMax::fit(&s.loads()[..test_start]);
            let e = per_ru.entry(*ru).or_default();
            e.0.push(sc.apply(predicted));
            e.1.push(sc.apply(actual));
            actual_total += actual;
            predicted_total += predicted;
            worst.insert(*ru, predicted);
            points.push(ForecastPoint {
                timestamp: s.timestamp(t).to_string(),
                ru_id: *ru,
                actual,
                predicted,
            });
        }
        let worst_case_predicted = crate::traffic::worst_case(&worst)?;
        decisions.push(ForecastDecision {
            timestamp: first.timestamp(t).to_string(),
            actual_total,
            predicted_total,
            worst_case_predicted,
            numerology: crate::policy::select_numerology(worst_case_predicted, grid, headroom),
        });
    }
    let mut mse_normalized_per_ru = BTreeMap::new();
    let (mut all_p, mut all_a) = (Vec::new(), Vec::new());
    for (ru, (p, a)) in per_ru {
        mse_normalized_per_ru.insert(ru, crate::traffic::mse(&p, &a)?);
        all_p.extend(p);
        all_a.extend(a);
    }
    Ok(ForecastEvaluation {
        test_len,
        mse_normalized: crate::traffic::mse(&all_p, &all_a)?,
        mse_normalized_per_ru,
        points,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            episodes: 2,
            slots_per_episode: 5,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (a, ra) = run_scenario(&small()).unwrap();
        let (b, rb) = run_scenario(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.len(), 10);
    }

    #[test]
    fn population_is_constant_within_an_episode() {
        let (summary, records) = run_scenario(&small()).unwrap();
        for ep in &summary.episodes {
            for r in records.iter().filter(|r| r.episode == ep.episode) {
                assert_eq!(r.ues.len(), ep.ue_count);
                assert_eq!(r.numerology, ep.numerology);
            }
        }
    }

    #[test]
    fn zero_traffic_is_vacuously_successful() {
        let cfg = SweepAxis::UeCount.apply(&small(), "0").unwrap();
        let (summary, records) = run_scenario(&cfg).unwrap();
        assert!(records.iter().all(|r| r.ues.is_empty()));
        assert_eq!(summary.success_rate_pct, 100.0);
        assert_eq!(summary.jfi_pct, 100.0);
    }

    #[test]
    fn noise_free_seasonal_naive_scores_zero() {
        let cfg = ScenarioConfig::default();
        let series = load_traffic(&cfg).unwrap();
        let ev = evaluate_forecaster(&series, &cfg.forecaster, 96, cfg.grid, cfg.headroom).unwrap();
        assert_eq!(ev.decisions.len(), 96);
        assert_eq!(ev.points.len(), 96 * 3);
        assert_eq!(ev.mse_normalized, 0.0);
        assert!(ev.decisions.iter().all(|d| d.numerology <= 4));
        let short = evaluate_forecaster(&series, &cfg.forecaster, 190, cfg.grid, cfg.headroom);
        assert!(matches!(short, Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn sweep_axis_tokens() {
        for a in SweepAxis::ALL {
            assert_eq!(a.token().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("speed".parse::<SweepAxis>().is_err());
        let cfg = SweepAxis::UeCount.apply(&small(), "9").unwrap();
        let (summary, _) = run_scenario(&cfg).unwrap();
        assert!(summary.episodes.iter().all(|e| e.ue_count == 9));
    }
}

//! Post-coloring scheduling: the conflict-aware modified proportional-fair
//! (MPF) time-sharing step and the round-robin, classical PF and
//! pass-through baselines.
//!
//! All schedulers start from the coloring and only ever move a PRB from its
//! holder(s) to a challenger when the challenger conflicts with nobody else
//! left on it, so the output stays proper for the slot's conflict graph.

use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::Assignment;
use crate::coloring::{verify_coloring, Coloring};
use crate::error::{Error, Result};
use crate::graph::ConflictGraph;
use crate::ids::{RuId, UeId};
use crate::policy::FairnessScheme;
use crate::radio::RadioSnapshot;

/// Floor applied to EWMA throughput after each update.
pub const EWMA_FLOOR_BPS: f64 = 1.0;
pub const DEFAULT_EWMA_ALPHA: f64 = 0.1;

pub fn mpf_metric(rate_bps: f64, ewma_bps: f64, weight: f64) -> Result<f64> {
    if !(ewma_bps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "EWMA throughput must be > 0, got {ewma_bps}"
        )));
    }
    Ok(rate_bps / ewma_bps * weight)
}

pub fn update_ewma(prev_bps: f64, achieved_bps: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * prev_bps + alpha * achieved_bps
}

/// Per-UE scheduler memory carried across slots.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessState {
    alpha: f64,
    ewma: BTreeMap<UeId, f64>,
    last_served: BTreeMap<UeId, i64>,
}

impl FairnessState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "EWMA alpha must be in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            ewma: BTreeMap::new(),
            last_served: BTreeMap::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Starts tracking new UEs at their demand and drops departed ones.
    pub fn sync_population(&mut self, ues: impl IntoIterator<Item = (UeId, f64)>) {
        let mut keep = BTreeSet::new();
        for (u, demand) in ues {
            keep.insert(u);
            self.ewma.entry(u).or_insert(demand.max(EWMA_FLOOR_BPS));
            self.last_served.entry(u).or_insert(-1);
        }
        self.ewma.retain(|u, _| keep.contains(u));
        self.last_served.retain(|u, _| keep.contains(u));
    }

    pub fn ewma(&self, u: UeId) -> Result<f64> {
        self.ewma.get(&u).copied().ok_or(Error::UnknownUe(u))
    }

    pub fn set_ewma(&mut self, u: UeId, value: f64) {
        self.ewma.insert(u, value.max(EWMA_FLOOR_BPS));
    }

    pub fn last_served(&self, u: UeId) -> i64 {
        self.last_served.get(&u).copied().unwrap_or(-1)
    }

    /// Folds one slot's realized rates into the EWMA of every tracked UE
    /// (absent UEs achieved 0) and stamps served UEs with `slot`.
    pub fn record_slot(&mut self, realized: &BTreeMap<UeId, f64>, served: &BTreeSet<UeId>, slot: i64) {
        let alpha = self.alpha;
        for (u, avg) in self.ewma.iter_mut() {
            let r = realized.get(u).copied().unwrap_or(0.0);
            *avg = update_ewma(*avg, r, alpha).max(EWMA_FLOOR_BPS);
        }
        for u in served {
            self.last_served.insert(*u, slot);
        }
    }
}

/// Achievable rate of every UE on every PRB, given who else transmits on
/// that PRB in the starting assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    rates: BTreeMap<UeId, Vec<f64>>,
}

impl RateTable {
    pub fn from_snapshot(snapshot: &RadioSnapshot, start: &Assignment) -> Result<Self> {
        let mut rates = BTreeMap::new();
        for ue in &snapshot.ues {
            let row = (0..snapshot.prb_count)
                .map(|p| snapshot.rate_if_served(ue.id, p, start))
                .collect::<Result<Vec<_>>>()?;
            rates.insert(ue.id, row);
        }
        Ok(Self { rates })
    }

    pub fn from_rows(rates: BTreeMap<UeId, Vec<f64>>) -> Self {
        Self { rates }
    }

    pub fn rate(&self, u: UeId, prb: usize) -> Result<f64> {
        self.rates
            .get(&u)
            .and_then(|r| r.get(prb))
            .copied()
            .ok_or(Error::UnknownUe(u))
    }
}

/// Scheduler output for one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub assignment: Assignment,
    pub preempted: BTreeSet<UeId>,
}

/// Everything the schedulers read for one slot.
pub struct SlotContext<'a> {
    pub graph: &'a ConflictGraph,
    pub coloring: &'a Coloring,
    pub serving: &'a BTreeMap<UeId, RuId>,
    pub weights: &'a BTreeMap<UeId, f64>,
    pub rates: &'a RateTable,
}

impl SlotContext<'_> {
    fn ru(&self, u: UeId) -> Result<RuId> {
        self.serving.get(&u).copied().ok_or(Error::UnknownUe(u))
    }

    fn weight(&self, u: UeId) -> f64 {
        self.weights.get(&u).copied().unwrap_or(1.0)
    }

    /// Current holders of `prb` that `u` may not share it with.
    fn conflictors(&self, current: &Assignment, u: UeId, prb: usize) -> Result<Vec<UeId>> {
        let ru = self.ru(u)?;
        Ok(current
            .occupants_of(prb)
            .into_iter()
            .filter(|&v| v != u && (self.graph.adjacent(u, v) || current.ru_of(v) == Some(ru)))
            .collect())
    }

    fn metric(&self, state: &FairnessState, u: UeId, prb: usize, weighted: bool) -> Result<f64> {
        let w = if weighted { self.weight(u) } else { 1.0 };
        mpf_metric(self.rates.rate(u, prb)?, state.ewma(u)?, w)
    }
}

/// Assignment realizing the coloring on each UE's serving RU.
pub fn coloring_to_assignment(
    graph: &ConflictGraph,
    coloring: &Coloring,
    serving: &BTreeMap<UeId, RuId>,
) -> Result<Assignment> {
    if !verify_coloring(graph, coloring) {
        return Err(Error::ImproperColoring(
            "coloring violates a conflict edge, PRB range or vertex partition".into(),
        ));
    }
    let mut a = Assignment::new();
    for (&u, &p) in &coloring.colors {
        let ru = serving.get(&u).copied().ok_or(Error::UnknownUe(u))?;
        a.assign(u, ru, p)
            .map_err(|e| Error::ImproperColoring(e.to_string()))?;
    }
    Ok(a)
}

fn displace(current: &mut Assignment, preempted: &mut BTreeSet<UeId>, victims: &[UeId]) {
    for &v in victims {
        current.unassign(v);
        preempted.insert(v);
    }
}

/// Pass-through: uncolored UEs stay unserved.
pub fn none_schedule(ctx: &SlotContext<'_>) -> Result<Schedule> {
    Ok(Schedule {
        assignment: coloring_to_assignment(ctx.graph, ctx.coloring, ctx.serving)?,
        preempted: BTreeSet::new(),
    })
}

/// Modified PF: each uncolored UE (ascending id) targets the PRB that
/// maximizes its weighted rate/EWMA metric and takes it if free of
/// conflicting holders, or preempts them when its metric strictly beats
/// every one of theirs.
pub fn mpf_schedule(ctx: &SlotContext<'_>, state: &FairnessState) -> Result<Schedule> {
    let mut current = coloring_to_assignment(ctx.graph, ctx.coloring, ctx.serving)?;
    let mut preempted = BTreeSet::new();
    let prb_count = ctx.coloring.prb_count;
    for &u in &ctx.coloring.uncolored {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..prb_count {
            let m = ctx.metric(state, u, p, true)?;
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((p, m));
            }
        }
        let Some((target, m_u)) = best else { continue };
        let holders = ctx.conflictors(&current, u, target)?;
        let wins = holders.iter().try_fold(true, |acc, &v| {
            let pv = current.prb_of(v).expect("holder has a PRB");
            Ok::<_, Error>(acc && m_u > ctx.metric(state, v, pv, true)?)
        })?;
        if holders.is_empty() || wins {
            displace(&mut current, &mut preempted, &holders);
            current.assign(u, ctx.ru(u)?, target)?;
        }
    }
    Ok(Schedule {
        assignment: current,
        preempted,
    })
}

/// Round robin over each PRB's contenders: the least recently served
/// waiting UE challenges the PRB's conflicting holders and wins when it was
/// served strictly longer ago than all of them (ties go to the lower id).
pub fn rr_schedule(ctx: &SlotContext<'_>, state: &FairnessState) -> Result<Schedule> {
    let mut current = coloring_to_assignment(ctx.graph, ctx.coloring, ctx.serving)?;
    let mut preempted = BTreeSet::new();
    let mut waiting: BTreeSet<(i64, UeId)> = ctx
        .coloring
        .uncolored
        .iter()
        .map(|&u| (state.last_served(u), u))
        .collect();
    for p in 0..ctx.coloring.prb_count {
        let Some(&(key, u)) = waiting.first() else { break };
        let holders = ctx.conflictors(&current, u, p)?;
        if holders
            .iter()
            .all(|&v| (key, u) < (state.last_served(v), v))
        {
            displace(&mut current, &mut preempted, &holders);
            current.assign(u, ctx.ru(u)?, p)?;
            waiting.remove(&(key, u));
        }
    }
    Ok(Schedule {
        assignment: current,
        preempted,
    })
}

/// Classical PF: per PRB, the waiting UE with the highest unweighted
/// rate/EWMA ratio challenges the holders and wins on a strictly higher
/// ratio than each of them.
pub fn pf_schedule(ctx: &SlotContext<'_>, state: &FairnessState) -> Result<Schedule> {
    let mut current = coloring_to_assignment(ctx.graph, ctx.coloring, ctx.serving)?;
    let mut preempted = BTreeSet::new();
    let mut waiting: BTreeSet<UeId> = ctx.coloring.uncolored.clone();
    for p in 0..ctx.coloring.prb_count {
        let mut best: Option<(UeId, f64)> = None;
        for &u in &waiting {
            let m = ctx.metric(state, u, p, false)?;
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((u, m));
            }
        }
        let Some((u, m_u)) = best else { break };
        let holders = ctx.conflictors(&current, u, p)?;
        let wins = holders.iter().try_fold(true, |acc, &v| {
            let pv = current.prb_of(v).expect("holder has a PRB");
            Ok::<_, Error>(acc && m_u > ctx.metric(state, v, pv, false)?)
        })?;
        if holders.is_empty() || wins {
            displace(&mut current, &mut preempted, &holders);
            current.assign(u, ctx.ru(u)?, p)?;
            waiting.remove(&u);
        }
    }
    Ok(Schedule {
        assignment: current,
        preempted,
    })
}

pub fn schedule(
    scheme: FairnessScheme,
    ctx: &SlotContext<'_>,
    state: &FairnessState,
) -> Result<Schedule> {
    match scheme {
        FairnessScheme::None => none_schedule(ctx),
        FairnessScheme::Rr => rr_schedule(ctx, state),
        FairnessScheme::Pf => pf_schedule(ctx, state),
        FairnessScheme::Mpf => mpf_schedule(ctx, state),
    }
}

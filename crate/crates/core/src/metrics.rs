//! Run-level scores: slot-averaged success rate, per-UE service shares and
//! Jain's fairness index over those shares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{RuId, UeId};

/// Outcome of one UE in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeOutcome {
    pub ue: UeId,
    pub ru: RuId,
    pub prb: Option<usize>,
    pub rate_bps: f64,
    pub satisfied: bool,
    pub preempted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub episode: u32,
    pub slot: u32,
    pub numerology: u8,
    /// Sorted by UE id.
    pub ues: Vec<UeOutcome>,
    pub colored: usize,
    pub uncolored: usize,
    pub preemptions: usize,
}

impl SlotRecord {
    pub fn satisfied_count(&self) -> usize {
        self.ues.iter().filter(|u| u.satisfied).count()
    }
}

/// Mean over slots with at least one UE of the satisfied percentage; 100
/// when no slot has any UE.
pub fn success_rate(records: &[SlotRecord]) -> f64 {
    let per_slot: Vec<f64> = records
        .iter()
        .filter(|r| !r.ues.is_empty())
        .map(|r| r.satisfied_count() as f64 / r.ues.len() as f64)
        .collect();
    if per_slot.is_empty() {
        return 100.0;
    }
    per_slot.iter().sum::<f64>() / per_slot.len() as f64 * 100.0
}

/// Fraction of its active slots in which each UE was satisfied.
pub fn service_shares(records: &[SlotRecord]) -> BTreeMap<UeId, f64> {
    let mut tally: BTreeMap<UeId, (usize, usize)> = BTreeMap::new();
    for r in records {
        for o in &r.ues {
            let t = tally.entry(o.ue).or_default();
            t.0 += usize::from(o.satisfied);
            t.1 += 1;
        }
    }
    tally
        .into_iter()
        .map(|(u, (sat, active))| (u, sat as f64 / active as f64))
        .collect()
}

pub fn service_share(records: &[SlotRecord], ue: UeId) -> Result<f64> {
    service_shares(records)
        .get(&ue)
        .copied()
        .ok_or(Error::UnknownUe(ue))
}

/// Jain's index in percent. All-zero shares count as perfectly fair.
pub fn jain_fairness(shares: &[f64]) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::InvalidArgument("JFI needs at least one UE".into()));
    }
    if let Some(s) = shares.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative service share {s}")));
    }
    let sum: f64 = shares.iter().sum();
    let sum_sq: f64 = shares.iter().map(|s| s * s).sum();
    if sum_sq == 0.0 {
        return Ok(100.0);
    }
    Ok(sum * sum / (shares.len() as f64 * sum_sq) * 100.0)
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{RuId, UeId};

/// Partial UE -> PRB map with per-RU occupancy. At most one UE per
/// (RU, PRB) and at most one PRB per UE.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    by_ue: BTreeMap<UeId, (RuId, usize)>,
    occupancy: BTreeMap<(RuId, usize), UeId>,
}

/// Flat wire form of one assignment entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentEntry {
    pub ue: UeId,
    pub ru: RuId,
    pub prb: usize,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, ue: UeId, ru: RuId, prb: usize) -> Result<()> {
        if let Some(&other) = self.occupancy.get(&(ru, prb)) {
            if other != ue {
                return Err(Error::AssignmentConflict(format!(
                    "RU {ru} PRB {prb} already serves UE {other}, cannot add UE {ue}"
                )));
            }
        }
        if let Some((old_ru, old_prb)) = self.by_ue.insert(ue, (ru, prb)) {
            self.occupancy.remove(&(old_ru, old_prb));
        }
        self.occupancy.insert((ru, prb), ue);
        Ok(())
    }

    pub fn unassign(&mut self, ue: UeId) -> Option<usize> {
        let (ru, prb) = self.by_ue.remove(&ue)?;
        self.occupancy.remove(&(ru, prb));
        Some(prb)
    }

    pub fn prb_of(&self, ue: UeId) -> Option<usize> {
        self.by_ue.get(&ue).map(|&(_, p)| p)
    }

    pub fn ru_of(&self, ue: UeId) -> Option<RuId> {
        self.by_ue.get(&ue).map(|&(r, _)| r)
    }

    pub fn ru_active(&self, ru: RuId, prb: usize) -> bool {
        self.occupancy.contains_key(&(ru, prb))
    }

    pub fn occupant(&self, ru: RuId, prb: usize) -> Option<UeId> {
        self.occupancy.get(&(ru, prb)).copied()
    }

    /// All UEs holding `prb`, across RUs, in ascending UE id.
    pub fn occupants_of(&self, prb: usize) -> Vec<UeId> {
        let mut v: Vec<UeId> = self
            .occupancy
            .iter()
            .filter(|((_, p), _)| *p == prb)
            .map(|(_, &u)| u)
            .collect();
        v.sort();
        v
    }

    pub fn len(&self) -> usize {
        self.by_ue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UeId, RuId, usize)> + '_ {
        self.by_ue.iter().map(|(&u, &(r, p))| (u, r, p))
    }

    /// Number of PRBs an RU transmits on.
    pub fn active_prbs(&self, ru: RuId) -> usize {
        self.occupancy.keys().filter(|(r, _)| *r == ru).count()
    }

    pub fn entries(&self) -> Vec<AssignmentEntry> {
        self.iter()
            .map(|(ue, ru, prb)| AssignmentEntry { ue, ru, prb })
            .collect()
    }

    pub fn from_entries(entries: &[AssignmentEntry]) -> Result<Self> {
        let mut a = Self::new();
        for e in entries {
            if a.by_ue.contains_key(&e.ue) {
                return Err(Error::AssignmentConflict(format!(
                    "UE {} listed twice",
                    e.ue
                )));
            }
            a.assign(e.ue, e.ru, e.prb)?;
        }
        Ok(a)
    }
}

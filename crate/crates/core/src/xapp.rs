//! Near-RT RIC xApp: caches the active A1 policy and turns each E2 report
//! into a PRB assignment (conflict graph, coloring, fairness step).

use std::collections::{BTreeMap, BTreeSet};

use crate::coloring::color;
use crate::control::{A1Policy, E2Control, E2Report, E2Setup};
use crate::error::{Error, Result};
use crate::fairness::{
    coloring_to_assignment, schedule, FairnessState, RateTable, SlotContext,
};
use crate::graph::build_graph;
use crate::ids::{RuId, UeId};
use crate::policy::PolicyProfile;
use crate::rng::SimRng;

use rand::SeedableRng;

#[derive(Debug, Clone)]
pub struct Xapp {
    policy: Option<PolicyProfile>,
    state: FairnessState,
}

impl Xapp {
    pub fn new(setup: &E2Setup) -> Result<Self> {
        Ok(Self {
            policy: None,
            state: FairnessState::new(setup.ewma_alpha)?,
        })
    }

    pub fn policy(&self) -> Option<&PolicyProfile> {
        self.policy.as_ref()
    }

    pub fn fairness_state(&self) -> &FairnessState {
        &self.state
    }

    pub fn apply_policy(&mut self, msg: &A1Policy) -> Result<()> {
        msg.policy.validate()?;
        log::debug!(
            "episode {}: policy mu={} coloring={} fairness={}",
            msg.episode_id,
            msg.policy.numerology,
            msg.policy.coloring_scheme,
            msg.policy.fairness_scheme
        );
        self.policy = Some(msg.policy.clone());
        Ok(())
    }

    pub fn handle_report(&mut self, report: &E2Report) -> Result<E2Control> {
        let policy = self
            .policy
            .as_ref()
            .ok_or_else(|| Error::Policy("E2 report received before any A1 policy".into()))?;
        let snap = &report.snapshot;
        if snap.prb_count == 0 {
            return Err(Error::InvalidGrid("snapshot has no PRBs".into()));
        }

        let mut weights = BTreeMap::new();
        let mut tolerances = BTreeMap::new();
        let mut serving: BTreeMap<UeId, RuId> = BTreeMap::new();
        for ue in &snap.ues {
            weights.insert(ue.id, policy.weight(&ue.class)?);
            tolerances.insert(ue.id, policy.tolerance(&ue.class)?);
            serving.insert(ue.id, ue.serving_ru);
        }
        self.state
            .sync_population(snap.ues.iter().map(|u| (u.id, u.demand_bps)));

        let graph = build_graph(snap, &tolerances)?;
        let mut rng = SimRng::seed_from_u64(report.coloring_seed);
        let coloring = color(&graph, snap.prb_count, &weights, policy.coloring_scheme, &mut rng);
        let start = coloring_to_assignment(&graph, &coloring, &serving)?;
        let rates = RateTable::from_snapshot(snap, &start)?;
        let ctx = SlotContext {
            graph: &graph,
            coloring: &coloring,
            serving: &serving,
            weights: &weights,
            rates: &rates,
        };
        let sched = schedule(policy.fairness_scheme, &ctx, &self.state)?;

        let mut realized = BTreeMap::new();
        for ue in &snap.ues {
            realized.insert(ue.id, snap.ue_total_rate(ue.id, &sched.assignment)?);
        }
        let served: BTreeSet<UeId> = sched.assignment.iter().map(|(u, _, _)| u).collect();
        self.state.record_slot(&realized, &served, report.global_slot);

        Ok(E2Control {
            episode_id: report.episode_id,
            slot_id: report.slot_id,
            assignment: sched.assignment.entries(),
            conflict_edges: graph.edges(),
            preempted: sched.preempted.into_iter().collect(),
            colored: coloring.colors.len(),
            uncolored: coloring.uncolored.len(),
        })
    }
}

//! Adversarial schedules that reproduce the two counterexample executions.
//!
//! Phase one runs each transaction alone up to the step right before its
//! coordinator learns its last read value. Phase two releases every
//! coordinator and delivers post-read traffic to each node in a fixed
//! per-node transaction order.

use std::collections::{BTreeMap, BTreeSet};

use crate::protocols::{Action, AlgorithmVariant};
use crate::simkit::{ChoiceClass, Completion, Decision, Endpoint, ProcessRef, Schedule, Sim, SimConfig, SimError};
use crate::txmodel::trace::NOTE_VALUE_LEARNED;
use crate::txmodel::{Scenario, StepBody};
use crate::value::{NodeId, TxnId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversaryPlan {
    /// Per node, the order in which transactions are served in phase two.
    pub priorities: BTreeMap<NodeId, Vec<TxnId>>,
    /// Traffic between a transaction and a node held back until the end.
    pub withheld: BTreeSet<(TxnId, NodeId)>,
}

impl AdversaryPlan {
    fn rank(&self, node: NodeId, txn: &TxnId) -> usize {
        self.priorities.get(&node).and_then(|p| p.iter().position(|t| t == txn)).unwrap_or(usize::MAX)
    }

    fn holds(&self, d: &Decision) -> bool {
        match d {
            Decision::Deliver { key, .. } => {
                let node = key.dst.node().or(key.src.node());
                node.is_some_and(|n| self.withheld.contains(&(key.txn.clone(), n)))
            }
            _ => false,
        }
    }
}

fn txns(names: &[&str]) -> Vec<TxnId> {
    names.iter().map(|n| TxnId::new(*n)).collect()
}

/// `N0` serves T1 then T2; `N1` serves T2 then T1.
pub fn fids_plan() -> AdversaryPlan {
    AdversaryPlan {
        priorities: [(0, txns(&["T1", "T2"])), (1, txns(&["T2", "T1"]))].into_iter().collect(),
        withheld: BTreeSet::new(),
    }
}

/// `N0`: T2 then T3; `N1`: T3 then T1; `N2`: T1 then T2. The traffic of
/// `T_i` with node `i - 1` is held back throughout.
pub fn rfids_plan() -> AdversaryPlan {
    AdversaryPlan {
        priorities: [(0, txns(&["T2", "T3"])), (1, txns(&["T3", "T1"])), (2, txns(&["T1", "T2"]))].into_iter().collect(),
        withheld: [("T1", 0), ("T2", 1), ("T3", 2)].into_iter().map(|(t, n)| (TxnId::new(t), n)).collect(),
    }
}

/// Configuration the adversarial schedules run under: the network never
/// stabilizes, so deliveries are entirely the schedule's choice.
pub fn adversary_config(scenario: &Scenario) -> SimConfig {
    SimConfig::for_scenario(scenario).asynchronous()
}

fn learned_count(sim: &Sim, txn: &TxnId) -> usize {
    sim.steps()
        .iter()
        .filter(|s| s.txn.as_ref() == Some(txn) && s.is_coordinator())
        .filter(|s| matches!(&s.body, StepBody::Note { tag, .. } if tag == NOTE_VALUE_LEARNED))
        .count()
}

/// Whether the coordinator on client `idx` may take its next step in
/// phase one: not if that step would learn its last read value.
fn before_boundary(sim: &Sim, idx: usize, reads: usize) -> bool {
    let proc = ProcessRef::client(idx);
    let Some(txn) = sim.handler_txn(&proc).cloned() else { return false };
    match sim.peek(&proc) {
        Some(Action::Note { tag, .. }) if tag == NOTE_VALUE_LEARNED => learned_count(sim, &txn) + 1 < reads,
        Some(Action::Await) | None => false,
        Some(_) => reads > 0 && learned_count(sim, &txn) < reads,
    }
}

fn decision_txn(sim: &Sim, d: &Decision) -> Option<TxnId> {
    match d {
        Decision::Step { proc } => sim.handler_txn(proc).cloned(),
        Decision::Deliver { key, .. } => Some(key.txn.clone()),
        Decision::Crash { .. } => None,
    }
}

/// Builds the two-phase schedule for `scenario` under `algorithm`.
pub fn adversarial_schedule(scenario: &Scenario, algorithm: AlgorithmVariant, plan: &AdversaryPlan) -> Result<Schedule, SimError> {
    let mut sim = Sim::new(adversary_config(scenario), algorithm, scenario)?;
    for program in &scenario.transactions {
        let txn = &program.txn_id;
        let client = ProcessRef::client(program.client);
        sim.apply(&Decision::Step { proc: client })?;
        loop {
            let choices: Vec<Decision> = sim
                .progress_choices()
                .into_iter()
                .filter(|d| !plan.holds(d) && decision_txn(&sim, d).as_ref() == Some(txn))
                .filter(|d| match d {
                    Decision::Step { proc } if proc.is_client() => before_boundary(&sim, proc.idx, program.read_set.len()),
                    _ => true,
                })
                .collect();
            let rank = |d: &Decision| match sim.classify(d) {
                ChoiceClass::Handler { h, .. } if matches!(d, Decision::Step { proc } if !proc.is_client()) => (0, h),
                ChoiceClass::Handler { h, .. } => (1, h),
                ChoiceClass::Deliver { msg_id } => (2, msg_id),
                _ => (3, 0),
            };
            let Some(d) = choices.into_iter().min_by_key(rank) else { break };
            sim.apply(&d)?;
        }
    }
    loop {
        let choices: Vec<Decision> = sim.progress_choices().into_iter().filter(|d| !plan.holds(d)).collect();
        let rank = |d: &Decision| -> (u8, usize, u64) {
            match (d, sim.classify(d)) {
                (Decision::Step { proc }, _) if proc.is_client() => (0, proc.idx, 0),
                (Decision::Step { .. }, ChoiceClass::Handler { h, .. }) => (1, 0, h),
                (Decision::Deliver { key, .. }, ChoiceClass::Deliver { msg_id }) => match key.dst {
                    Endpoint::Client { .. } => (2, 0, msg_id),
                    Endpoint::Node { node } => (3, plan.rank(node, &key.txn), msg_id),
                },
                _ => (4, 0, 0),
            }
        };
        let Some(d) = choices.into_iter().min_by_key(rank) else { break };
        sim.apply(&d)?;
    }
    let script = sim.decisions().iter().map(|d| d.decision.clone()).collect();
    Ok(Schedule::scripted(script, Completion::Fair))
}

/// Resolves `builtin:fids` / `builtin:rfids` for the given workload.
pub fn builtin_schedule(name: &str, scenario: &Scenario, algorithm: AlgorithmVariant) -> Option<Result<Schedule, SimError>> {
    let plan = match name.strip_prefix("builtin:").unwrap_or(name) {
        "fids" => fids_plan(),
        "rfids" => rfids_plan(),
        _ => return None,
    };
    Some(adversarial_schedule(scenario, algorithm, &plan))
}

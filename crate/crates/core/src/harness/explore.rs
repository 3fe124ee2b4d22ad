//! Bounded schedule exploration with serializability checking of every
//! terminal history.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adversary::adversary_config;
use crate::checkers::serializability::check_serializability;
use crate::checkers::{CheckError, Verdict};
use crate::protocols::{AlgorithmVariant, VariantTag};
use crate::simkit::{ChoiceClass, Completion, Decision, Policy, RandomPolicy, Schedule, Sim, SimError};
use crate::txmodel::{CommittedHistory, CommittedTxn, Op, Outcome, Scenario};

pub const DEFAULT_STATE_BUDGET: usize = 2_000_000;
pub const DEFAULT_RANDOM_RUNS: usize = 10_000;
const RANDOM_CRASH_PROB: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Granularity {
    /// Every handler step is a scheduling point.
    Exact,
    /// Consecutive trivial primitives of one handler run as a block.
    #[default]
    TrivialBlocks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ExploreMode {
    Exhaustive { max_states: usize },
    Random { runs: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub schedule: Schedule,
    pub history: CommittedHistory,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplorationResult {
    pub scenario: String,
    pub algorithm: VariantTag,
    pub mode: ExploreMode,
    pub granularity: Granularity,
    pub schedules_run: usize,
    pub states_visited: usize,
    pub terminal_histories: Vec<CommittedHistory>,
    pub violations: Vec<Violation>,
}

impl ExplorationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("state budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Committed history from the results a run reached, in workload order.
pub fn history_of(sim: &Sim) -> CommittedHistory {
    let scenario = sim.scenario();
    let txns = scenario
        .transactions
        .iter()
        .filter_map(|p| {
            let r = sim.results().get(&p.txn_id)?;
            (r.outcome == Outcome::Commit).then(|| CommittedTxn {
                txn: p.txn_id.clone(),
                ops: r
                    .read_set
                    .iter()
                    .map(|x| Op::read(x.item.clone(), x.val.clone()))
                    .chain(r.write_set.iter().map(|x| Op::write(x.item.clone(), x.val.clone())))
                    .collect(),
            })
        })
        .collect();
    CommittedHistory { txns, initial: scenario.items.iter().map(|d| (d.id.clone(), d.initial.clone())).collect() }
}

fn script_of(sim: &Sim) -> Schedule {
    Schedule::scripted(sim.decisions().iter().map(|d| d.decision.clone()).collect(), Completion::Stop)
}

/// Applies `d`, then, under block granularity, the same handler's
/// following trivial primitives.
fn advance(sim: &mut Sim, d: &Decision, granularity: Granularity) -> Result<(), SimError> {
    sim.apply_unchecked(d)?;
    if granularity == Granularity::TrivialBlocks {
        if let Decision::Step { proc } = d {
            if !proc.is_client() {
                while sim.peek(proc).is_some_and(|a| a.is_trivial_prim())
                    && !matches!(sim.classify(d), ChoiceClass::Handler { spinning: true, .. })
                {
                    sim.apply_unchecked(d)?;
                }
            }
        }
    }
    Ok(())
}

struct Collector {
    histories: BTreeMap<CommittedHistory, Schedule>,
    terminals: usize,
}

impl Collector {
    fn record(&mut self, sim: &Sim) {
        self.terminals += 1;
        self.histories.entry(history_of(sim)).or_insert_with(|| script_of(sim));
    }

    fn finish(
        self,
        scenario: &Scenario,
        algorithm: AlgorithmVariant,
        mode: ExploreMode,
        granularity: Granularity,
        states: usize,
    ) -> Result<ExplorationResult, ExploreError> {
        let mut violations = Vec::new();
        for (history, schedule) in &self.histories {
            let verdict = check_serializability(history)?;
            if !verdict.pass {
                violations.push(Violation { schedule: schedule.clone(), history: history.clone(), verdict });
            }
        }
        Ok(ExplorationResult {
            scenario: scenario.name.clone(),
            algorithm: algorithm.tag,
            mode,
            granularity,
            schedules_run: self.terminals,
            states_visited: states,
            terminal_histories: self.histories.into_keys().collect(),
            violations,
        })
    }
}

fn exhaustive(
    scenario: &Scenario,
    algorithm: AlgorithmVariant,
    max_states: usize,
    granularity: Granularity,
) -> Result<ExplorationResult, ExploreError> {
    let root = Sim::new(adversary_config(scenario), algorithm, scenario)?.without_trace();
    let mut visited: HashSet<u128> = HashSet::new();
    visited.insert(root.fingerprint());
    let mut stack = vec![root];
    let mut out = Collector { histories: BTreeMap::new(), terminals: 0 };
    while let Some(sim) = stack.pop() {
        if sim.progress_choices().is_empty() {
            out.record(&sim);
            continue;
        }
        let choices = sim.enabled();
        let mut spare = Some(sim);
        for (k, d) in choices.iter().enumerate().rev() {
            let mut next = if k == 0 { spare.take().expect("parent kept for last child") } else { spare.as_ref().expect("parent").clone() };
            advance(&mut next, d, granularity)?;
            if visited.insert(next.fingerprint()) {
                if visited.len() > max_states {
                    return Err(ExploreError::BudgetExceeded(max_states));
                }
                stack.push(next);
            }
        }
    }
    let states = visited.len();
    out.finish(scenario, algorithm, ExploreMode::Exhaustive { max_states }, granularity, states)
}

/// Seed of the `i`-th random run.
pub fn run_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

fn random(scenario: &Scenario, algorithm: AlgorithmVariant, runs: usize, seed: u64) -> Result<ExplorationResult, ExploreError> {
    let root = Sim::new(adversary_config(scenario), algorithm, scenario)?.without_trace();
    let ends: Vec<Result<Sim, SimError>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut sim = root.clone();
            let mut policy = RandomPolicy::new(run_seed(seed, i)).with_crashes(RANDOM_CRASH_PROB);
            while let Some(d) = policy.choose(&sim) {
                sim.apply_unchecked(&d)?;
            }
            Ok(sim)
        })
        .collect();
    let mut out = Collector { histories: BTreeMap::new(), terminals: 0 };
    let mut seen = BTreeSet::new();
    for sim in ends {
        let sim = sim?;
        seen.insert(sim.fingerprint());
        out.record(&sim);
    }
    out.finish(scenario, algorithm, ExploreMode::Random { runs, seed }, Granularity::Exact, seen.len())
}

pub fn explore(
    scenario: &Scenario,
    algorithm: AlgorithmVariant,
    mode: ExploreMode,
    granularity: Granularity,
) -> Result<ExplorationResult, ExploreError> {
    match mode {
        ExploreMode::Exhaustive { max_states } => exhaustive(scenario, algorithm, max_states, granularity),
        ExploreMode::Random { runs, seed } => random(scenario, algorithm, runs, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios;

    #[test]
    fn random_exploration_is_deterministic() {
        let s = scenarios::fids();
        let mode = ExploreMode::Random { runs: 50, seed: 3 };
        let a = explore(&s, VariantTag::Base.into(), mode, Granularity::Exact).unwrap();
        let b = explore(&s, VariantTag::Base.into(), mode, Granularity::Exact).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.schedules_run, 50);
    }

    #[test]
    fn tiny_budget_is_reported() {
        let s = scenarios::fids();
        let mode = ExploreMode::Exhaustive { max_states: 10 };
        assert!(matches!(explore(&s, VariantTag::Base.into(), mode, Granularity::TrivialBlocks), Err(ExploreError::BudgetExceeded(10))));
    }
}

//! Deterministic discrete-event engine. Every nondeterministic choice
//! (which process steps, which message is delivered, which node crashes) is
//! made by a [`Schedule`]; one decision advances logical time by one tick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::MemoryError;
use crate::protocols::AlgorithmVariant;
use crate::txmodel::{ExecutionTrace, Scenario, ScenarioError};

mod engine;
mod policy;
mod process;
mod schedule;

pub use engine::{ChoiceClass, Message, Sim};
pub use policy::{FairPolicy, Policy, RandomPolicy};
pub use process::{Endpoint, MsgKey, ProcKind, ProcessRef};
pub use schedule::{Completion, Decision, Schedule, ScheduleError};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub n_nodes: usize,
    pub procs_per_node: usize,
    pub n_clients: usize,
    /// Post-stabilization delivery bound Δ, in ticks.
    pub delta: u64,
    /// Global stabilization tick. `None`: the network never stabilizes and
    /// messages may be delayed arbitrarily.
    pub gst: Option<u64>,
    pub seed: u64,
    /// Guard against non-terminating schedules.
    pub max_steps: usize,
}

impl SimConfig {
    pub const DEFAULT_DELTA: u64 = 16;
    pub const DEFAULT_PROCS: usize = 3;
    pub const DEFAULT_MAX_STEPS: usize = 200_000;

    /// Synchronous configuration sized for `scenario`.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            n_nodes: scenario.n_nodes(),
            procs_per_node: Self::DEFAULT_PROCS,
            n_clients: scenario.n_clients(),
            delta: Self::DEFAULT_DELTA,
            gst: Some(0),
            seed: 0,
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn asynchronous(mut self) -> Self {
        self.gst = None;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_nodes == 0 || self.procs_per_node == 0 || self.delta == 0 {
            return Err(SimError::Config("nNodes, procsPerNode and delta must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("schedule names a choice that is not enabled at decision {index}: {decision}")]
    ScheduleStuck { index: usize, decision: String },
    #[error("placement error: {0}")]
    Placement(#[from] ScenarioError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("crash budget f = {0} exhausted")]
    CrashBudget(usize),
    #[error("step limit of {0} reached")]
    StepLimit(usize),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Runs `scenario` under `algorithm` with every choice made by `schedule`.
pub fn run(
    config: &SimConfig,
    algorithm: AlgorithmVariant,
    scenario: &Scenario,
    schedule: &Schedule,
) -> Result<ExecutionTrace, SimError> {
    let mut sim = Sim::new(config.clone(), algorithm, scenario)?;
    sim.drive(schedule)?;
    Ok(sim.into_trace(schedule.clone()))
}

/// Like [`run`] for scripted schedules, but silently skips decisions that
/// are not enabled instead of failing.
pub fn run_lenient(
    config: &SimConfig,
    algorithm: AlgorithmVariant,
    scenario: &Scenario,
    script: &[Decision],
    then: Completion,
) -> Result<ExecutionTrace, SimError> {
    let mut sim = Sim::new(config.clone(), algorithm, scenario)?;
    for d in script {
        if sim.is_enabled(d) {
            sim.apply(d)?;
        }
    }
    sim.complete(then)?;
    Ok(sim.into_trace(Schedule::Scripted { script: script.to_vec(), then }))
}

//! Property checkers. Each returns a [`Verdict`]; failing verdicts carry a
//! witness that can be re-validated against the trace.

use thiserror::Error;

use crate::simkit::{ScheduleError, SimError};
use crate::txmodel::analysis::AnalysisError;

pub mod invariants;
pub mod properties;
pub mod rerun;
pub mod serializability;
mod verdict;

pub use invariants::{check_invariants, InvariantReport};
pub use properties::{check_dap, check_ddap, check_fast_decision, check_read_delay, check_weak_ir, check_weak_progress};
pub use rerun::{check_seamless_ft, check_strong_ir};
pub use serializability::{check_serializability, check_trace_serializability};
pub use verdict::{DepEdge, DepKind, FootprintEntry, PropertyTag, Verdict, Witness};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("history has {0} committed transactions; brute force is capped at 8")]
    TooLarge(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

//! Transactions, traces and the analyses defined over them.

pub mod analysis;
pub mod history;
pub mod program;
pub mod trace;

pub use analysis::{HappenedBefore, Interval};
pub use history::{CommittedHistory, CommittedTxn, Op, OpKind};
pub use program::{DataPlacement, ItemDecl, Scenario, ScenarioError, TransactionProgram, WriteCondition, WriteRule};
pub use trace::{ExecutionTrace, ItemValue, Outcome, ScheduledDecision, Step, StepBody, TraceMeta, TxnResult};

//! Deterministic simulator and property checker for parallel distributed
//! transactional systems.
//!
//! * [`simkit`] runs protocols under fully controlled schedules.
//! * [`memory`] holds the per-node base objects and logs every access.
//! * [`txmodel`] defines transactions, traces, depth and histories.
//! * [`protocols`] implements the base algorithm and its four variants.
//! * [`checkers`] decides each property on recorded traces.
//! * [`harness`] ships the counterexample scenarios, the explorer and the
//!   property matrix.

pub mod checkers;
pub mod harness;
pub mod memory;
pub mod protocols;
pub mod simkit;
pub mod txmodel;
pub mod value;

pub use value::{ItemId, NodeId, TxnId, Value};

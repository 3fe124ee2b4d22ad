use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::process::{MsgKey, ProcessRef};
use crate::value::NodeId;

/// One resolved nondeterministic choice.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decision {
    /// Let `proc` take its next step: invoke the next transaction, run the
    /// next handler step, or fire a client timeout.
    Step { proc: ProcessRef },
    /// Deliver a message. `proc` pins the receiving node process; `None`
    /// picks the lowest-index idle one.
    Deliver {
        key: MsgKey,
        #[serde(default)]
        proc: Option<usize>,
    },
    Crash { node: NodeId },
}

impl Decision {
    pub fn is_crash(&self) -> bool {
        matches!(self, Decision::Crash { .. })
    }
}

/// What to do once a scripted schedule runs out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Completion {
    #[default]
    Stop,
    Fair,
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Schedule {
    Scripted {
        script: Vec<Decision>,
        #[serde(default)]
        then: Completion,
    },
    RandomSeeded { seed: u64 },
    /// Index into the enabled-choice list at each decision; runs fair once
    /// the cursor is exhausted.
    ExhaustiveCursor { choices: Vec<usize> },
    /// Deterministic fair policy, one transaction at a time.
    Fair,
    /// Fair policy that invokes every client's transaction eagerly.
    FairConcurrent,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("node {0} already crashes earlier in the schedule")]
    AlreadyCrashed(NodeId),
    #[error("crash position {pos} is past the end of a script of length {len}")]
    OutOfRange { pos: usize, len: usize },
    #[error("only scripted schedules accept injected crashes")]
    NotScripted,
}

impl Schedule {
    pub fn scripted(script: Vec<Decision>, then: Completion) -> Self {
        Schedule::Scripted { script, then }
    }

    /// Inserts a crash of `node` before script position `pos`. Later
    /// decisions that would deliver to, or step a process of, that node are
    /// removed: those messages are dropped by the engine instead.
    pub fn inject_crash(&self, node: NodeId, pos: usize) -> Result<Schedule, ScheduleError> {
        let Schedule::Scripted { script, then } = self else {
            return Err(ScheduleError::NotScripted);
        };
        if pos > script.len() {
            return Err(ScheduleError::OutOfRange { pos, len: script.len() });
        }
        if script[..pos].contains(&Decision::Crash { node }) {
            return Err(ScheduleError::AlreadyCrashed(node));
        }
        let mut out = script[..pos].to_vec();
        out.push(Decision::Crash { node });
        out.extend(script[pos..].iter().filter(|d| !targets_node(d, node)).cloned());
        Ok(Schedule::Scripted { script: out, then: *then })
    }
}

fn targets_node(d: &Decision, node: NodeId) -> bool {
    match d {
        Decision::Step { proc } => proc.node == Some(node),
        Decision::Deliver { key, .. } => key.dst.node() == Some(node),
        Decision::Crash { node: n } => *n == node,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::MsgKind;
    use crate::simkit::process::Endpoint;

    fn deliver(node: NodeId) -> Decision {
        Decision::Deliver {
            key: MsgKey {
                src: Endpoint::Client { idx: 0 },
                dst: Endpoint::Node { node },
                txn: "T1".into(),
                kind: MsgKind::Read,
                seq: 0,
            },
            proc: None,
        }
    }

    #[test]
    fn inject_drops_later_traffic_to_crashed_node() {
        let s = Schedule::scripted(
            vec![Decision::Step { proc: ProcessRef::client(0) }, deliver(1), deliver(0)],
            Completion::Stop,
        );
        let Schedule::Scripted { script, .. } = s.inject_crash(1, 1).unwrap() else { unreachable!() };
        assert_eq!(script.len(), 3);
        assert_eq!(script[1], Decision::Crash { node: 1 });
        assert_eq!(script[2], deliver(0));
    }

    #[test]
    fn double_crash_is_rejected() {
        let s = Schedule::scripted(vec![Decision::Crash { node: 2 }], Completion::Stop);
        assert_eq!(s.inject_crash(2, 1), Err(ScheduleError::AlreadyCrashed(2)));
        assert!(s.inject_crash(2, 0).is_ok());
    }

    #[test]
    fn decisions_serialize_with_kind_tag() {
        let v = serde_json::to_value(Decision::Crash { node: 3 }).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "crash", "node": 3}));
    }
}

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::memory::{BaseObjectId, PrimKind};
use crate::protocols::{AlgorithmVariant, ProtocolMessage};
use crate::simkit::{Decision, Endpoint, MsgKey, ProcessRef, Schedule, SimConfig};
use crate::txmodel::Scenario;
use crate::value::{ItemId, NodeId, TxnId, Value};

pub const NOTE_VALUE_LEARNED: &str = "valueLearned";
pub const NOTE_DROP: &str = "drop";
pub const NOTE_TIMEOUT: &str = "timeout";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Commit,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemValue {
    pub item: ItemId,
    pub val: Value,
}

impl From<(ItemId, Value)> for ItemValue {
    fn from((item, val): (ItemId, Value)) -> Self {
        Self { item, val }
    }
}

/// Return value of `invokeTxn`: decision plus the read and write sets in
/// operation order. Aborted transactions report the writes they intended.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxnResult {
    pub outcome: Outcome,
    pub read_set: Vec<ItemValue>,
    pub write_set: Vec<ItemValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", rename_all_fields = "camelCase")]
pub enum StepBody {
    Invoke,
    /// Coordinator responses carry the result; message handlers respond
    /// with all fields `null`.
    Response {
        outcome: Option<Outcome>,
        read_set: Option<Vec<ItemValue>>,
        write_set: Option<Vec<ItemValue>>,
    },
    Prim {
        obj: BaseObjectId,
        op: PrimKind,
        nontrivial: bool,
        args: Vec<Value>,
        ret: Value,
    },
    Send {
        msg_id: u64,
        key: MsgKey,
        dst: Endpoint,
        payload: ProtocolMessage,
    },
    Recv {
        msg_id: u64,
        key: MsgKey,
        src: Endpoint,
        payload: ProtocolMessage,
    },
    Crash {
        node: NodeId,
    },
    Note {
        tag: String,
        data: serde_json::Value,
    },
}

impl StepBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StepBody::Invoke => "invoke",
            StepBody::Response { .. } => "response",
            StepBody::Prim { .. } => "prim",
            StepBody::Send { .. } => "send",
            StepBody::Recv { .. } => "recv",
            StepBody::Crash { .. } => "crash",
            StepBody::Note { .. } => "note",
        }
    }

    pub fn note_tag(&self) -> Option<&str> {
        match self {
            StepBody::Note { tag, .. } => Some(tag),
            _ => None,
        }
    }
}

/// One trace record. `h` names the handler instance the step belongs to and
/// `t` is the logical tick at which it happened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub i: usize,
    #[serde(flatten)]
    pub body: StepBody,
    pub proc: Option<ProcessRef>,
    pub txn: Option<TxnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u64>,
    pub t: u64,
}

impl Step {
    pub fn is_coordinator(&self) -> bool {
        self.proc.is_some_and(|p| p.is_client())
    }

    /// The coordinator's response step, carrying the transaction result.
    pub fn txn_result(&self) -> Option<TxnResult> {
        match &self.body {
            StepBody::Response { outcome: Some(outcome), read_set, write_set } if self.is_coordinator() => Some(TxnResult {
                outcome: *outcome,
                read_set: read_set.clone().unwrap_or_default(),
                write_set: write_set.clone().unwrap_or_default(),
            }),
            _ => None,
        }
    }
}

/// A decision as executed, tagged with the transaction it advanced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScheduledDecision {
    pub decision: Decision,
    pub txn: Option<TxnId>,
    /// Whether the decision belongs to the transaction's read phase.
    pub read_phase: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceMeta {
    pub scenario: Scenario,
    pub algorithm: AlgorithmVariant,
    pub config: SimConfig,
    pub schedule: Schedule,
    pub decisions: Vec<ScheduledDecision>,
}

impl TraceMeta {
    /// The executed decisions as a stop-at-end script.
    pub fn replay_schedule(&self) -> Schedule {
        Schedule::Scripted {
            script: self.decisions.iter().map(|d| d.decision.clone()).collect(),
            then: crate::simkit::Completion::Stop,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTrace {
    pub steps: Vec<Step>,
    pub meta: TraceMeta,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.meta.scenario
    }

    /// Index of `txn`'s coordinator response step.
    pub fn response_index(&self, txn: &TxnId) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.txn.as_ref() == Some(txn) && s.txn_result().is_some())
    }

    pub fn invoke_index(&self, txn: &TxnId) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.txn.as_ref() == Some(txn) && matches!(s.body, StepBody::Invoke))
    }

    pub fn result(&self, txn: &TxnId) -> Option<TxnResult> {
        self.response_index(txn).and_then(|i| self.steps[i].txn_result())
    }

    /// Transactions in order of invocation.
    pub fn txns(&self) -> Vec<TxnId> {
        self.steps
            .iter()
            .filter(|s| matches!(s.body, StepBody::Invoke))
            .filter_map(|s| s.txn.clone())
            .collect()
    }

    /// Coordinator invocation and response steps, stripped of indices and
    /// ticks.
    pub fn invocations_and_responses(&self) -> Vec<(TxnId, Option<TxnResult>)> {
        self.steps
            .iter()
            .filter_map(|s| match &s.body {
                StepBody::Invoke => Some((s.txn.clone()?, None)),
                StepBody::Response { .. } => Some((s.txn.clone()?, Some(s.txn_result()?))),
                _ => None,
            })
            .collect()
    }

    pub fn crashed_nodes(&self) -> Vec<NodeId> {
        self.steps
            .iter()
            .filter_map(|s| match s.body {
                StepBody::Crash { node } => Some(node),
                _ => None,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R, meta: TraceMeta) -> io::Result<Self> {
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line).map_err(io::Error::from)?);
        }
        Ok(Self { steps, meta })
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_serializes_flat_with_kind() {
        let s = Step {
            i: 3,
            body: StepBody::Prim {
                obj: BaseObjectId::new(0, "X1.lockL"),
                op: PrimKind::Cas,
                nontrivial: true,
                args: vec![Value::Nil, Value::text("T1")],
                ret: Value::Int(1),
            },
            proc: Some(ProcessRef::node_proc(0, 1)),
            txn: Some("T1".into()),
            h: Some(4),
            t: 3,
        };
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["kind"], "prim");
        assert_eq!(v["op"], "cas");
        assert_eq!(v["proc"]["kind"], "NodeProcess");
        assert_eq!(v["txn"], "T1");
        let back: Step = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn response_step_round_trips() {
        let s = Step {
            i: 0,
            body: StepBody::Response {
                outcome: Some(Outcome::Commit),
                read_set: Some(vec![ItemValue { item: "X1".into(), val: Value::Nil }]),
                write_set: Some(vec![]),
            },
            proc: Some(ProcessRef::client(0)),
            txn: Some("T1".into()),
            h: Some(0),
            t: 9,
        };
        let line = serde_json::to_string(&s).unwrap();
        assert!(line.contains("\"readSet\""));
        let back: Step = serde_json::from_str(&line).unwrap();
        assert_eq!(back.txn_result().unwrap().outcome, Outcome::Commit);
    }
}

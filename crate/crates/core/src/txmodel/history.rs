use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::analysis::AnalysisError;
use super::trace::{ExecutionTrace, Outcome, StepBody};
use crate::value::{ItemId, TxnId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Op {
    pub kind: OpKind,
    pub item: ItemId,
    pub value: Value,
}

impl Op {
    pub fn read(item: impl Into<ItemId>, value: Value) -> Self {
        Self { kind: OpKind::Read, item: item.into(), value }
    }

    pub fn write(item: impl Into<ItemId>, value: Value) -> Self {
        Self { kind: OpKind::Write, item: item.into(), value }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommittedTxn {
    pub txn: TxnId,
    pub ops: Vec<Op>,
}

/// Committed transactions with their operations, in response order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommittedHistory {
    pub txns: Vec<CommittedTxn>,
    pub initial: BTreeMap<ItemId, Value>,
}

impl CommittedHistory {
    pub fn initial(&self, item: &ItemId) -> Value {
        self.initial.get(item).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }
}

/// Builds the committed history from coordinator response steps alone.
pub fn derive_history(trace: &ExecutionTrace) -> Result<CommittedHistory, AnalysisError> {
    let initial = trace.meta.scenario.items.iter().map(|d| (d.id.clone(), d.initial.clone())).collect();
    let mut txns = Vec::new();
    for s in &trace.steps {
        if !s.is_coordinator() {
            continue;
        }
        let StepBody::Response { outcome, read_set, write_set } = &s.body else { continue };
        let (Some(reads), Some(writes)) = (read_set, write_set) else {
            return Err(AnalysisError::MalformedResponse(s.i));
        };
        if *outcome != Some(Outcome::Commit) {
            continue;
        }
        let txn = s.txn.clone().ok_or(AnalysisError::NoTransaction(s.i))?;
        let ops = reads
            .iter()
            .map(|r| Op { kind: OpKind::Read, item: r.item.clone(), value: r.val.clone() })
            .chain(writes.iter().map(|w| Op { kind: OpKind::Write, item: w.item.clone(), value: w.val.clone() }))
            .collect();
        txns.push(CommittedTxn { txn, ops });
    }
    Ok(CommittedHistory { txns, initial })
}

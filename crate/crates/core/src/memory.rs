//! Per-node shared memory made of base objects accessed through atomic
//! primitives (read, write, compare-and-swap).
//!
//! Every access is returned to the caller as a [`PrimAccess`] so the engine
//! can log it; nothing mutates an object without producing a non-trivial
//! access record.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkit::ProcessRef;
use crate::txmodel::analysis::{intervals, Interval};
use crate::txmodel::{ExecutionTrace, StepBody};
use crate::value::{ItemId, NodeId, TxnId, Value};

/// Name of the per-node lock used by the variant without per-item locks.
pub const GLOBAL_LOCK: &str = "node.globalLock";

/// A base object: a named cell living in one node's shared memory.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BaseObjectId {
    pub node: NodeId,
    pub name: Arc<str>,
}

impl BaseObjectId {
    pub fn new(node: NodeId, name: impl Into<String>) -> Self {
        Self { node, name: Arc::from(name.into()) }
    }
}

impl fmt::Display for BaseObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}:{}", self.node, self.name)
    }
}

/// The four base objects kept per data-item replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Val,
    SeqNum,
    LockS,
    LockL,
}

impl Field {
    pub fn suffix(self) -> &'static str {
        match self {
            Field::Val => "val",
            Field::SeqNum => "seqNum",
            Field::LockS => "lockS",
            Field::LockL => "lockL",
        }
    }

    pub fn initial(self, item_initial: &Value) -> Value {
        match self {
            Field::Val => item_initial.clone(),
            Field::SeqNum => Value::Int(0),
            Field::LockS | Field::LockL => Value::Nil,
        }
    }
}

/// `X1.lockL` and friends.
pub fn object_name(item: &ItemId, field: Field) -> String {
    format!("{}.{}", item, field.suffix())
}

/// Whether a base-object name denotes a long-lived lock register.
pub fn is_long_lock(name: &str) -> bool {
    name.ends_with(".lockL") || name == GLOBAL_LOCK
}

/// Item an object name belongs to, if any.
pub fn item_of(name: &str) -> Option<ItemId> {
    if name == GLOBAL_LOCK {
        return None;
    }
    name.rsplit_once('.').map(|(item, _)| ItemId::new(item))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimKind {
    Read,
    Write,
    Cas,
}

impl PrimKind {
    /// Writes and CAS may modify the object; a failed CAS counts as well.
    pub fn is_nontrivial(self) -> bool {
        !matches!(self, PrimKind::Read)
    }
}

/// A primitive operation requested by a handler.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PrimOp {
    Read,
    Write(Value),
    Cas { expected: Value, new: Value },
}

impl PrimOp {
    pub fn kind(&self) -> PrimKind {
        match self {
            PrimOp::Read => PrimKind::Read,
            PrimOp::Write(_) => PrimKind::Write,
            PrimOp::Cas { .. } => PrimKind::Cas,
        }
    }

    pub fn args(&self) -> Vec<Value> {
        match self {
            PrimOp::Read => Vec::new(),
            PrimOp::Write(v) => vec![v.clone()],
            PrimOp::Cas { expected, new } => vec![expected.clone(), new.clone()],
        }
    }
}

/// Outcome of one executed primitive, ready to be logged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimAccess {
    pub obj: BaseObjectId,
    pub kind: PrimKind,
    pub args: Vec<Value>,
    pub ret: Value,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("process on node {process_node} accessed {obj}, which lives on another node")]
    CrossNodeAccess { process_node: NodeId, obj: BaseObjectId },
    #[error("base object {0} does not exist")]
    UnknownObject(BaseObjectId),
}

/// Shared memory of all nodes. Objects are created up front by the protocol
/// layout; accesses to undeclared objects are errors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Memory {
    cells: BTreeMap<BaseObjectId, Value>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, obj: BaseObjectId, initial: Value) {
        self.cells.insert(obj, initial);
    }

    pub fn get(&self, obj: &BaseObjectId) -> Option<&Value> {
        self.cells.get(obj)
    }

    pub fn objects(&self) -> impl Iterator<Item = (&BaseObjectId, &Value)> {
        self.cells.iter()
    }

    fn cell(&mut self, process_node: NodeId, obj: &BaseObjectId) -> Result<&mut Value, MemoryError> {
        if obj.node != process_node {
            return Err(MemoryError::CrossNodeAccess { process_node, obj: obj.clone() });
        }
        self.cells
            .get_mut(obj)
            .ok_or_else(|| MemoryError::UnknownObject(obj.clone()))
    }

    pub fn read(&mut self, process_node: NodeId, obj: &BaseObjectId) -> Result<PrimAccess, MemoryError> {
        self.apply(process_node, obj, &PrimOp::Read)
    }

    pub fn write(&mut self, process_node: NodeId, obj: &BaseObjectId, v: Value) -> Result<PrimAccess, MemoryError> {
        self.apply(process_node, obj, &PrimOp::Write(v))
    }

    pub fn cas(
        &mut self,
        process_node: NodeId,
        obj: &BaseObjectId,
        expected: Value,
        new: Value,
    ) -> Result<PrimAccess, MemoryError> {
        self.apply(process_node, obj, &PrimOp::Cas { expected, new })
    }

    /// Executes one primitive atomically. Write returns `Nil`; CAS returns
    /// `Int(1)` on success and `Int(0)` on failure.
    pub fn apply(&mut self, process_node: NodeId, obj: &BaseObjectId, op: &PrimOp) -> Result<PrimAccess, MemoryError> {
        let cell = self.cell(process_node, obj)?;
        let ret = match op {
            PrimOp::Read => cell.clone(),
            PrimOp::Write(v) => {
                *cell = v.clone();
                Value::Nil
            }
            PrimOp::Cas { expected, new } => {
                if cell == expected {
                    *cell = new.clone();
                    Value::Int(1)
                } else {
                    Value::Int(0)
                }
            }
        };
        Ok(PrimAccess { obj: obj.clone(), kind: op.kind(), args: op.args(), ret })
    }
}

/// A logged primitive step, as recovered from a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PrimitiveStep {
    pub obj: BaseObjectId,
    pub op: PrimKind,
    pub args: Vec<Value>,
    pub ret: Value,
    pub nontrivial: bool,
    pub proc: ProcessRef,
    pub txn: Option<TxnId>,
    pub trace_index: usize,
}

/// All primitive steps in trace order.
pub fn primitive_steps(trace: &ExecutionTrace) -> Vec<PrimitiveStep> {
    trace
        .steps
        .iter()
        .filter_map(|s| match &s.body {
            StepBody::Prim { obj, op, nontrivial, args, ret } => Some(PrimitiveStep {
                obj: obj.clone(),
                op: *op,
                args: args.clone(),
                ret: ret.clone(),
                nontrivial: *nontrivial,
                proc: s.proc.expect("primitive steps are attributed to a process"),
                txn: s.txn.clone(),
                trace_index: s.i,
            }),
            _ => None,
        })
        .collect()
}

/// Every ordered pair of primitive steps that contend: distinct, concurrent
/// transactions accessing the same object with at least one non-trivial
/// access. Both `(a, b)` and `(b, a)` are returned; pairs are trace indices.
pub fn contending_pairs(trace: &ExecutionTrace) -> Vec<(usize, usize)> {
    let prims = primitive_steps(trace);
    let ivs = intervals(trace);
    let mut out = Vec::new();
    for (ai, a) in prims.iter().enumerate() {
        for b in &prims[ai + 1..] {
            if a.obj != b.obj || !(a.nontrivial || b.nontrivial) {
                continue;
            }
            let (Some(ta), Some(tb)) = (&a.txn, &b.txn) else { continue };
            if ta == tb {
                continue;
            }
            let concurrent = match (ivs.get(ta), ivs.get(tb)) {
                (Some(x), Some(y)) => Interval::overlaps(x, y),
                _ => false,
            };
            if concurrent {
                out.push((a.trace_index, b.trace_index));
                out.push((b.trace_index, a.trace_index));
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem_with(obj: &BaseObjectId, v: Value) -> Memory {
        let mut m = Memory::new();
        m.declare(obj.clone(), v);
        m
    }

    #[test]
    fn fresh_seq_num_reads_zero() {
        let obj = BaseObjectId::new(0, object_name(&ItemId::new("X1"), Field::SeqNum));
        let mut m = mem_with(&obj, Field::SeqNum.initial(&Value::Nil));
        let acc = m.read(0, &obj).unwrap();
        assert_eq!(acc.ret, Value::Int(0));
        assert!(!acc.kind.is_nontrivial());
    }

    #[test]
    fn fresh_value_reads_bottom() {
        let obj = BaseObjectId::new(0, "X1.val");
        let mut m = mem_with(&obj, Value::Nil);
        assert_eq!(m.read(0, &obj).unwrap().ret, Value::Nil);
    }

    #[test]
    fn cross_node_access_is_rejected() {
        let obj = BaseObjectId::new(1, "X1.val");
        let mut m = mem_with(&obj, Value::Nil);
        assert!(matches!(m.read(0, &obj), Err(MemoryError::CrossNodeAccess { .. })));
        assert!(matches!(m.write(0, &obj, Value::Int(1)), Err(MemoryError::CrossNodeAccess { .. })));
    }

    #[test]
    fn write_then_read() {
        let obj = BaseObjectId::new(0, "X1.val");
        let mut m = mem_with(&obj, Value::Nil);
        let w = m.write(0, &obj, Value::Int(5)).unwrap();
        assert!(w.kind.is_nontrivial());
        assert_eq!(m.read(0, &obj).unwrap().ret, Value::Int(5));
    }

    #[test]
    fn cas_success_and_failure() {
        let obj = BaseObjectId::new(0, "X1.lockL");
        let mut m = mem_with(&obj, Value::Nil);
        let ok = m.cas(0, &obj, Value::Nil, Value::text("t1")).unwrap();
        assert_eq!(ok.ret, Value::Int(1));
        assert_eq!(m.get(&obj), Some(&Value::text("t1")));
        let fail = m.cas(0, &obj, Value::Nil, Value::text("t2")).unwrap();
        assert_eq!(fail.ret, Value::Int(0));
        assert!(fail.kind.is_nontrivial());
        assert_eq!(m.get(&obj), Some(&Value::text("t1")));
    }

    #[test]
    fn names_round_trip() {
        let name = object_name(&ItemId::new("X7"), Field::LockL);
        assert!(is_long_lock(&name));
        assert_eq!(item_of(&name), Some(ItemId::new("X7")));
        assert!(is_long_lock(GLOBAL_LOCK));
        assert_eq!(item_of(GLOBAL_LOCK), None);
    }
}

//! Runtime invariants asserted on every generated trace.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::properties::check_weak_ir;
use super::CheckError;
use crate::memory::{is_long_lock, item_of, BaseObjectId, Field, Memory, PrimOp, PrimKind};
use crate::protocols::{ProtocolMessage, Vote};
use crate::simkit::ProcessRef;
use crate::txmodel::analysis::{intervals, DepthAnalysis};
use crate::txmodel::trace::NOTE_DROP;
use crate::txmodel::{ExecutionTrace, StepBody};
use crate::value::{ItemId, NodeId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvariantResult {
    pub name: &'static str,
    pub holds: bool,
    pub details: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct InvariantReport {
    pub results: Vec<InvariantResult>,
}

impl InvariantReport {
    pub fn all_hold(&self) -> bool {
        self.results.iter().all(|r| r.holds)
    }

    pub fn failures(&self) -> Vec<&InvariantResult> {
        self.results.iter().filter(|r| !r.holds).collect()
    }
}

type Check = Result<(), String>;

/// Reconstructs base-object state from the trace's primitive log.
fn initial_memory(trace: &ExecutionTrace) -> Memory {
    let scenario = trace.scenario();
    let n = scenario.n_nodes().max(trace.meta.config.n_nodes);
    let layout = crate::protocols::Layout::new(scenario, trace.meta.algorithm, n, trace.meta.config.delta);
    let mut m = Memory::new();
    for (obj, v) in layout.objects() {
        m.declare(obj, v);
    }
    m
}

fn prim_op(op: PrimKind, args: &[Value]) -> Option<PrimOp> {
    match (op, args) {
        (PrimKind::Read, _) => Some(PrimOp::Read),
        (PrimKind::Write, [v]) => Some(PrimOp::Write(v.clone())),
        (PrimKind::Cas, [e, n]) => Some(PrimOp::Cas { expected: e.clone(), new: n.clone() }),
        _ => None,
    }
}

/// Replays every primitive; `visit` sees the state before and after.
fn replay(trace: &ExecutionTrace, mut visit: impl FnMut(usize, &BaseObjectId, &Value, &Value, &Memory) -> Check) -> Check {
    let mut mem = initial_memory(trace);
    for s in &trace.steps {
        let StepBody::Prim { obj, op, args, ret, .. } = &s.body else { continue };
        let node = s.proc.and_then(|p| p.node).ok_or_else(|| format!("step {}: primitive outside a node process", s.i))?;
        let before = mem.get(obj).cloned().ok_or_else(|| format!("step {}: unknown object {obj}", s.i))?;
        let pop = prim_op(*op, args).ok_or_else(|| format!("step {}: malformed primitive", s.i))?;
        let acc = mem.apply(node, obj, &pop).map_err(|e| format!("step {}: {e}", s.i))?;
        if &acc.ret != ret {
            return Err(format!("step {}: logged return {ret} but replay gives {}", s.i, acc.ret));
        }
        let after = mem.get(obj).cloned().unwrap_or_default();
        visit(s.i, obj, &before, &after, &mem)?;
    }
    Ok(())
}

fn lock_safety(trace: &ExecutionTrace) -> Check {
    let txn_at: Vec<Option<String>> = trace.steps.iter().map(|s| s.txn.as_ref().map(|t| t.to_string())).collect();
    replay(trace, |i, obj, before, after, _| {
        if !is_long_lock(&obj.name) || before == after {
            return Ok(());
        }
        let me = txn_at[i].clone().unwrap_or_default();
        if *after != Value::Nil && *after != Value::text(&me) {
            return Err(format!("step {i}: {me} set {obj} to {after}"));
        }
        if *before != Value::Nil && *before != Value::text(&me) {
            return Err(format!("step {i}: {me} changed {obj} held by {before}"));
        }
        Ok(())
    })?;
    // Crash-free traces whose transactions all finished leave no lock held.
    let ivs = intervals(trace);
    if trace.crashed_nodes().is_empty() && !ivs.is_empty() && ivs.values().all(|iv| iv.end.is_some()) {
        let mut mem = initial_memory(trace);
        for s in &trace.steps {
            if let (StepBody::Prim { obj, op, args, .. }, Some(node)) = (&s.body, s.proc.and_then(|p| p.node)) {
                if let Some(pop) = prim_op(*op, args) {
                    let _ = mem.apply(node, obj, &pop);
                }
            }
        }
        for (obj, v) in mem.objects() {
            let lock = is_long_lock(&obj.name) || obj.name.ends_with(Field::LockS.suffix());
            if lock && *v != Value::Nil {
                return Err(format!("{obj} still held by {v} after every transaction finished"));
            }
        }
    }
    Ok(())
}

fn monotone_seq_num(trace: &ExecutionTrace) -> Check {
    replay(trace, |i, obj, before, after, _| {
        if !obj.name.ends_with(Field::SeqNum.suffix()) {
            return Ok(());
        }
        match (before, after) {
            (Value::Int(a), Value::Int(b)) if b >= a => Ok(()),
            _ => Err(format!("step {i}: {obj} went from {before} to {after}")),
        }
    })
}

/// Every successful read reply names a (val, seqNum) pair the replica held
/// at some point where its short lock was free.
fn read_atomicity(trace: &ExecutionTrace) -> Check {
    let mut states: HashMap<(NodeId, ItemId), BTreeSet<(String, i64)>> = HashMap::new();
    let snapshot = |mem: &Memory, node: NodeId, item: &ItemId| -> Option<(String, i64, bool)> {
        let get = |f: Field| mem.get(&BaseObjectId::new(node, crate::memory::object_name(item, f))).cloned();
        let val = get(Field::Val)?;
        let seq = match get(Field::SeqNum)? {
            Value::Int(s) => s,
            _ => return None,
        };
        Some((serde_json::to_string(&val).unwrap_or_default(), seq, get(Field::LockS)? == Value::Nil))
    };
    let mut mem = initial_memory(trace);
    let keys: Vec<(NodeId, ItemId)> = mem
        .objects()
        .filter(|(o, _)| o.name.ends_with(Field::Val.suffix()))
        .filter_map(|(o, _)| Some((o.node, item_of(&o.name)?)))
        .collect();
    for (node, item) in &keys {
        if let Some((v, s, true)) = snapshot(&mem, *node, item) {
            states.entry((*node, item.clone())).or_default().insert((v, s));
        }
    }
    for s in &trace.steps {
        match &s.body {
            StepBody::Prim { obj, op, args, nontrivial: true, .. } => {
                let node = s.proc.and_then(|p| p.node).ok_or_else(|| format!("step {}: primitive outside a node", s.i))?;
                let pop = prim_op(*op, args).ok_or_else(|| format!("step {}: malformed primitive", s.i))?;
                mem.apply(node, obj, &pop).map_err(|e| e.to_string())?;
                if let Some(item) = item_of(&obj.name) {
                    if let Some((v, sq, true)) = snapshot(&mem, node, &item) {
                        states.entry((node, item)).or_default().insert((v, sq));
                    }
                }
            }
            StepBody::Send { payload: ProtocolMessage::ReadReply { key, val, seq_num, vote: Vote::Commit, .. }, .. } => {
                let node = s.proc.and_then(|p| p.node).ok_or_else(|| format!("step {}: read reply outside a node", s.i))?;
                let pair = (serde_json::to_string(val).unwrap_or_default(), *seq_num);
                if !states.get(&(node, key.clone())).is_some_and(|set| set.contains(&pair)) {
                    return Err(format!("step {}: reply ({val}, {seq_num}) for {key} on node {node} matches no quiescent state", s.i));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn hb_acyclic(da: &DepthAnalysis) -> Check {
    if da.hb.is_acyclic() {
        Ok(())
    } else {
        Err("happened-before has a cycle".into())
    }
}

fn depth_monotone(trace: &ExecutionTrace, da: &DepthAnalysis) -> Check {
    let n = trace.steps.len();
    for b in 0..n {
        let (Some(db), Some(tb)) = (da.depths[b], &trace.steps[b].txn) else { continue };
        for a in 0..b {
            if trace.steps[a].txn.as_ref() != Some(tb) || !da.hb.before(a, b) {
                continue;
            }
            if da.depths[a].is_some_and(|d| d > db) {
                return Err(format!("step {a} happens before step {b} but is deeper"));
            }
        }
    }
    Ok(())
}

fn crash_finality(trace: &ExecutionTrace) -> Check {
    let mut dead: BTreeSet<NodeId> = BTreeSet::new();
    for s in &trace.steps {
        if let StepBody::Crash { node } = s.body {
            dead.insert(node);
            continue;
        }
        if let Some(node) = s.proc.and_then(|p| p.node) {
            if dead.contains(&node) {
                return Err(format!("step {} by node {node} after its crash", s.i));
            }
        }
    }
    Ok(())
}

fn message_integrity(trace: &ExecutionTrace) -> Check {
    let mut sent: BTreeMap<u64, (usize, Option<String>)> = BTreeMap::new();
    let mut consumed: BTreeSet<u64> = BTreeSet::new();
    for s in &trace.steps {
        match &s.body {
            StepBody::Send { msg_id, .. } => {
                if sent.insert(*msg_id, (s.i, s.txn.as_ref().map(|t| t.to_string()))).is_some() {
                    return Err(format!("step {}: message {msg_id} sent twice", s.i));
                }
            }
            StepBody::Recv { msg_id, .. } => {
                let Some((_, txn)) = sent.get(msg_id) else {
                    return Err(format!("step {}: receive of unsent message {msg_id}", s.i));
                };
                if *txn != s.txn.as_ref().map(|t| t.to_string()) {
                    return Err(format!("step {}: message {msg_id} changed transaction", s.i));
                }
                if !consumed.insert(*msg_id) {
                    return Err(format!("step {}: message {msg_id} delivered twice", s.i));
                }
            }
            StepBody::Note { tag, data } if tag == NOTE_DROP => {
                if let Some(id) = data.get("msgId").and_then(|v| v.as_u64()) {
                    if !consumed.insert(id) {
                        return Err(format!("step {}: message {id} dropped after delivery", s.i));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// A process starts a new handler only after its previous one responded.
fn one_handler_at_a_time(trace: &ExecutionTrace) -> Check {
    let mut current: HashMap<ProcessRef, (u64, bool)> = HashMap::new();
    for s in &trace.steps {
        let (Some(p), Some(h)) = (s.proc, s.h) else { continue };
        let entry = current.entry(p).or_insert((h, false));
        if entry.0 != h {
            if !entry.1 {
                return Err(format!("step {}: {p} interleaves handler {h} with unfinished handler {}", s.i, entry.0));
            }
            *entry = (h, false);
        }
        if entry.1 {
            return Err(format!("step {}: handler {h} continues after its response", s.i));
        }
        if matches!(s.body, StepBody::Response { .. }) {
            entry.1 = true;
        }
    }
    Ok(())
}

/// After GST every message is consumed within Δ ticks.
fn synchrony(trace: &ExecutionTrace) -> Check {
    let Some(gst) = trace.meta.config.gst else { return Ok(()) };
    let delta = trace.meta.config.delta;
    let mut sent_t: HashMap<u64, u64> = HashMap::new();
    for s in &trace.steps {
        let id = match &s.body {
            StepBody::Send { msg_id, .. } => {
                sent_t.insert(*msg_id, s.t);
                continue;
            }
            StepBody::Recv { msg_id, .. } => *msg_id,
            StepBody::Note { tag, data } if tag == NOTE_DROP => match data.get("msgId").and_then(|v| v.as_u64()) {
                Some(id) => id,
                None => continue,
            },
            _ => continue,
        };
        if let Some(&t0) = sent_t.get(&id) {
            if s.t > t0.max(gst) + delta {
                return Err(format!("step {}: message {id} sent at tick {t0} consumed at tick {}", s.i, s.t));
            }
        }
    }
    Ok(())
}

pub fn check_invariants(trace: &ExecutionTrace) -> Result<InvariantReport, CheckError> {
    let da = DepthAnalysis::new(trace)?;
    let weak_ir = check_weak_ir(trace)?;
    let checks: Vec<(&'static str, Check)> = vec![
        ("lock safety", lock_safety(trace)),
        ("monotone seqNum", monotone_seq_num(trace)),
        ("read atomicity", read_atomicity(trace)),
        ("happened-before acyclic", hb_acyclic(&da)),
        ("depth monotone", depth_monotone(trace, &da)),
        ("weak invisible reads", if weak_ir.pass { Ok(()) } else { Err(weak_ir.details) }),
        ("crash finality", crash_finality(trace)),
        ("message integrity", message_integrity(trace)),
        ("one handler at a time", one_handler_at_a_time(trace)),
        ("synchrony", synchrony(trace)),
    ];
    Ok(InvariantReport {
        results: checks
            .into_iter()
            .map(|(name, r)| InvariantResult { name, holds: r.is_ok(), details: r.err().unwrap_or_default() })
            .collect(),
    })
}

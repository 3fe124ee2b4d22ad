//! Trace-local property checkers.

use std::collections::{BTreeMap, BTreeSet};

use super::{CheckError, PropertyTag, Verdict, Witness};
use crate::memory::{contending_pairs, primitive_steps};
use crate::protocols::ProtocolMessage;
use crate::txmodel::analysis::{intervals, DepthAnalysis, Interval};
use crate::txmodel::{ExecutionTrace, Outcome, StepBody};
use crate::value::{ItemId, TxnId};

/// Write set the transaction ended with: the response's, or the static
/// write targets when it never decided.
fn final_write_set_empty(trace: &ExecutionTrace, txn: &TxnId) -> bool {
    match trace.result(txn) {
        Some(r) => r.write_set.is_empty(),
        None => trace.scenario().program(txn).is_none_or(|p| p.write_rule.is_empty()),
    }
}

pub fn check_weak_ir(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    for txn in trace.txns() {
        if !final_write_set_empty(trace, &txn) {
            continue;
        }
        let steps = final_attempt_writes(trace, &txn);
        if !steps.is_empty() {
            let details = format!("{txn} has an empty write set but executed {} non-trivial primitives", steps.len());
            return Ok(Verdict::fail(PropertyTag::WeakIR, Witness::Steps { txn, steps }, details));
        }
    }
    Ok(Verdict::pass(PropertyTag::WeakIR, "no transaction with an empty write set modified shared memory"))
}

/// Non-trivial primitives issued for `txn`'s last attempt: handlers of
/// messages sent after its last restart, other than the restart handlers.
fn final_attempt_writes(trace: &ExecutionTrace, txn: &TxnId) -> Vec<usize> {
    let mut restarts = 0;
    let mut sent_in: BTreeMap<u64, usize> = BTreeMap::new();
    let mut handlers: BTreeMap<u64, Option<usize>> = BTreeMap::new();
    let mut prims = Vec::new();
    for s in trace.steps.iter().filter(|s| s.txn.as_ref() == Some(txn)) {
        match &s.body {
            StepBody::Send { msg_id, payload, .. } => {
                sent_in.insert(*msg_id, restarts);
                if matches!(payload, ProtocolMessage::Restart { .. }) {
                    restarts += 1;
                }
            }
            StepBody::Recv { msg_id, payload, .. } => {
                if let Some(h) = s.h {
                    let attempt = (!matches!(payload, ProtocolMessage::Restart { .. })).then(|| sent_in.get(msg_id).copied()).flatten();
                    handlers.insert(h, attempt);
                }
            }
            StepBody::Prim { nontrivial: true, .. } => prims.push((s.h, s.i)),
            _ => {}
        }
    }
    prims.into_iter().filter(|(h, _)| h.and_then(|h| handlers.get(&h).copied().flatten()) == Some(restarts)).map(|(_, i)| i).collect()
}

/// Every transaction decided in every trace; every transaction that ran
/// without overlap with another one committed.
pub fn check_weak_progress(traces: &[ExecutionTrace]) -> Result<Verdict, CheckError> {
    for (k, trace) in traces.iter().enumerate() {
        let all: Vec<TxnId> = trace.scenario().transactions.iter().map(|t| t.txn_id.clone()).collect();
        let undecided: Vec<TxnId> = all.iter().filter(|t| trace.result(t).is_none()).cloned().collect();
        if !undecided.is_empty() {
            let details = format!("trace {k}: {} transactions never decided", undecided.len());
            return Ok(Verdict::fail(PropertyTag::WeakProgress, Witness::Undecided { txns: undecided }, details));
        }
        let ivs = intervals(trace);
        for (txn, iv) in &ivs {
            let concurrent = ivs.iter().any(|(other, o)| other != txn && Interval::overlaps(iv, o));
            if !concurrent && trace.result(txn).is_some_and(|r| r.outcome != Outcome::Commit) {
                let details = format!("trace {k}: {txn} ran without concurrency but aborted");
                return Ok(Verdict::fail(PropertyTag::WeakProgress, Witness::NotCommitted { txn: txn.clone(), trace: k }, details));
            }
        }
    }
    Ok(Verdict::pass(PropertyTag::WeakProgress, format!("{} traces: all decided, solo transactions committed", traces.len())))
}

fn data_set(trace: &ExecutionTrace, txn: &TxnId) -> BTreeSet<ItemId> {
    trace.scenario().program(txn).map(|p| p.data_set()).unwrap_or_default()
}

fn contention_check(trace: &ExecutionTrace, property: PropertyTag) -> Result<Verdict, CheckError> {
    let by_index: std::collections::BTreeMap<usize, _> = primitive_steps(trace).into_iter().map(|p| (p.trace_index, p)).collect();
    for (a, b) in contending_pairs(trace) {
        let (pa, pb) = (&by_index[&a], &by_index[&b]);
        let (Some(ta), Some(tb)) = (&pa.txn, &pb.txn) else { continue };
        let da = data_set(trace, ta);
        let db = data_set(trace, tb);
        let shared: BTreeSet<ItemId> = match property {
            PropertyTag::DDAP => {
                let local = trace.scenario().stored_items(pa.obj.node);
                da.intersection(&db).filter(|x| local.contains(*x)).cloned().collect()
            }
            _ => da.intersection(&db).cloned().collect(),
        };
        if shared.is_empty() {
            let details = format!(
                "{ta} and {tb} contend on {} at steps {a} and {b} without sharing data{}",
                pa.obj,
                if property == PropertyTag::DDAP { " on that node" } else { "" }
            );
            let witness = Witness::Contention { a, b, obj: pa.obj.clone(), txns: (ta.clone(), tb.clone()) };
            return Ok(Verdict::fail(property, witness, details));
        }
    }
    Ok(Verdict::pass(property, "every contending pair shares a data item"))
}

pub fn check_dap(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    contention_check(trace, PropertyTag::DAP)
}

pub fn check_ddap(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    contention_check(trace, PropertyTag::DDAP)
}

/// Fast decision on a failure-free solo trace, for every decided
/// transaction in it.
pub fn check_fast_decision(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    if !trace.crashed_nodes().is_empty() {
        return Err(CheckError::Precondition("fast decision is defined on failure-free traces".into()));
    }
    let da = DepthAnalysis::new(trace)?;
    let mut summary = Vec::new();
    for txn in trace.txns() {
        let Some(r) = trace.response_index(&txn) else { continue };
        let depth = da.txn_depth(&txn)?;
        let learned = da.learned_depths(&txn)?;
        let last = learned.last().map_or(0, |(_, _, pd)| *pd);
        let bound = last + 2;
        if depth > bound {
            let details = format!("{txn} decided at depth {depth}, more than 2 past its last learned value at {last}");
            return Ok(Verdict::fail(PropertyTag::FastDecision, Witness::Depth { txn, depth, bound }, details));
        }
        // Running partial depth over prefixes.
        let mut pd = 0u32;
        let mut learned_before = 0usize;
        for p in 0..=r {
            if p > 0 {
                let j = p - 1;
                if trace.steps[j].txn.as_ref() == Some(&txn) && da.hb.before(j, r) {
                    pd = pd.max(da.depths[j].unwrap_or(0));
                }
                if learned.iter().any(|(_, i, _)| *i == j) {
                    learned_before += 1;
                }
            }
            if pd + 2 >= depth {
                continue;
            }
            let reachable = learned.iter().filter(|(_, _, d)| *d <= pd + 2).count();
            if reachable <= learned_before {
                let details = format!("{txn}: no value learned within 2 delays of partial depth {pd}");
                let witness = Witness::StalledPrefix { txn, prefix_len: p, partial_depth: pd, learned_before };
                return Ok(Verdict::fail(PropertyTag::FastDecision, witness, details));
            }
        }
        summary.push(format!("{txn}: depth {depth}, bound {bound}"));
    }
    Ok(Verdict::pass(PropertyTag::FastDecision, summary.join("; ")))
}

/// No read value is learned before partial depth 2.
pub fn check_read_delay(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    if trace.scenario().f == 0 {
        return Err(CheckError::Precondition("read delay is defined for fault-tolerant configurations (f ≥ 1)".into()));
    }
    let da = DepthAnalysis::new(trace)?;
    let mut n = 0;
    for txn in trace.txns() {
        if trace.response_index(&txn).is_none() {
            continue;
        }
        for (item, step, partial_depth) in da.learned_depths(&txn)? {
            n += 1;
            if partial_depth < 2 {
                let details = format!("{txn} learned {item} at partial depth {partial_depth}");
                return Ok(Verdict::fail(PropertyTag::ReadDelay, Witness::LearnedTooEarly { txn, item, step, partial_depth }, details));
            }
        }
    }
    Ok(Verdict::pass(PropertyTag::ReadDelay, format!("{n} learned values, all at partial depth ≥ 2")))
}

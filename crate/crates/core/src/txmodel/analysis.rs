//! Happened-before, depth, partial depth and transaction intervals.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::trace::{ExecutionTrace, StepBody, NOTE_DROP, NOTE_VALUE_LEARNED};
use crate::value::{ItemId, TxnId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("step {0} has no causal origin")]
    OrphanStep(usize),
    #[error("transaction {0} is not decided in this trace")]
    Undecided(TxnId),
    #[error("response step {0} lacks its read or write set")]
    MalformedResponse(usize),
    #[error("step {0} does not belong to a transaction")]
    NoTransaction(usize),
}

/// Happened-before: program order inside a handler plus send→receive,
/// transitively closed. Closure rows are bitsets over step indices.
#[derive(Clone, Debug)]
pub struct HappenedBefore {
    preds: Vec<Vec<usize>>,
    ancestors: Vec<Vec<u64>>,
}

impl HappenedBefore {
    pub fn new(trace: &ExecutionTrace) -> Self {
        let n = trace.steps.len();
        let words = n.div_ceil(64);
        let mut preds = vec![Vec::new(); n];
        let mut last_in_handler: HashMap<u64, usize> = HashMap::new();
        let mut send_of: HashMap<u64, usize> = HashMap::new();
        for (i, s) in trace.steps.iter().enumerate() {
            if let Some(h) = s.h {
                if let Some(&p) = last_in_handler.get(&h) {
                    preds[i].push(p);
                }
                last_in_handler.insert(h, i);
            }
            match &s.body {
                StepBody::Send { msg_id, .. } => {
                    send_of.insert(*msg_id, i);
                }
                StepBody::Recv { msg_id, .. } => {
                    if let Some(&p) = send_of.get(msg_id) {
                        preds[i].push(p);
                    }
                }
                _ => {}
            }
        }
        let mut ancestors = vec![vec![0u64; words]; n];
        for (i, pi) in preds.iter().enumerate() {
            for &p in pi {
                if p < i {
                    let (head, tail) = ancestors.split_at_mut(i);
                    for (dst, src) in tail[0].iter_mut().zip(&head[p]) {
                        *dst |= *src;
                    }
                    tail[0][p / 64] |= 1 << (p % 64);
                }
            }
        }
        Self { preds, ancestors }
    }

    pub fn direct_preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    /// Strict relation: `a` happened before `b`.
    pub fn before(&self, a: usize, b: usize) -> bool {
        a < b && self.ancestors[b][a / 64] & (1 << (a % 64)) != 0
    }

    /// Every edge points forward in the trace, so the relation is a strict
    /// partial order.
    pub fn is_acyclic(&self) -> bool {
        self.preds.iter().enumerate().all(|(i, ps)| ps.iter().all(|&p| p < i))
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

/// Depth of every step that belongs to a handler (`None` for crash steps
/// and engine notes).
pub fn step_depths(trace: &ExecutionTrace) -> Result<Vec<Option<u32>>, AnalysisError> {
    let mut depth: Vec<Option<u32>> = vec![None; trace.steps.len()];
    let mut last_in_handler: HashMap<u64, usize> = HashMap::new();
    let mut send_of: HashMap<u64, usize> = HashMap::new();
    for (i, s) in trace.steps.iter().enumerate() {
        let Some(h) = s.h else { continue };
        let prev = last_in_handler.insert(h, i).and_then(|p| depth[p]);
        let d = match &s.body {
            StepBody::Invoke => Some(0),
            StepBody::Recv { msg_id, .. } => {
                let via = send_of.get(msg_id).and_then(|&p| depth[p]).map(|d| d + 1);
                match (prev, via) {
                    (None, None) => None,
                    (a, b) => a.max(b),
                }
            }
            _ => prev,
        };
        if let StepBody::Send { msg_id, .. } = &s.body {
            send_of.insert(*msg_id, i);
        }
        depth[i] = Some(d.ok_or(AnalysisError::OrphanStep(i))?);
    }
    Ok(depth)
}

pub fn step_depth(trace: &ExecutionTrace, i: usize) -> Result<u32, AnalysisError> {
    step_depths(trace)?.get(i).copied().flatten().ok_or(AnalysisError::NoTransaction(i))
}

/// Cached depth and causality analysis of one trace.
#[derive(Clone, Debug)]
pub struct DepthAnalysis<'a> {
    trace: &'a ExecutionTrace,
    pub hb: HappenedBefore,
    pub depths: Vec<Option<u32>>,
}

impl<'a> DepthAnalysis<'a> {
    pub fn new(trace: &'a ExecutionTrace) -> Result<Self, AnalysisError> {
        Ok(Self { trace, hb: HappenedBefore::new(trace), depths: step_depths(trace)? })
    }

    fn response(&self, txn: &TxnId) -> Result<usize, AnalysisError> {
        self.trace.response_index(txn).ok_or_else(|| AnalysisError::Undecided(txn.clone()))
    }

    /// Depth of the coordinator's response step.
    pub fn txn_depth(&self, txn: &TxnId) -> Result<u32, AnalysisError> {
        let r = self.response(txn)?;
        self.depths[r].ok_or(AnalysisError::OrphanStep(r))
    }

    /// Maximum depth over `txn`'s steps among the first `prefix_len` steps
    /// that happened before its response; 0 if there are none.
    pub fn partial_depth(&self, prefix_len: usize, txn: &TxnId) -> Result<u32, AnalysisError> {
        let r = self.response(txn)?;
        Ok((0..prefix_len.min(r))
            .filter(|&j| self.trace.steps[j].txn.as_ref() == Some(txn) && self.hb.before(j, r))
            .filter_map(|j| self.depths[j])
            .max()
            .unwrap_or(0))
    }

    /// Partial depth at each value-learned event of `txn`, in trace order.
    pub fn learned_depths(&self, txn: &TxnId) -> Result<Vec<(ItemId, usize, u32)>, AnalysisError> {
        self.response(txn)?;
        value_learned_events(self.trace, txn)
            .into_iter()
            .map(|(item, i)| Ok((item, i, self.partial_depth(i + 1, txn)?)))
            .collect::<Result<Vec<_>, _>>()
            .map(|mut v| {
                v.sort_by_key(|(_, i, _)| *i);
                v
            })
    }
}

pub fn txn_depth(trace: &ExecutionTrace, txn: &TxnId) -> Result<u32, AnalysisError> {
    DepthAnalysis::new(trace)?.txn_depth(txn)
}

pub fn partial_depth(trace: &ExecutionTrace, prefix_len: usize, txn: &TxnId) -> Result<u32, AnalysisError> {
    DepthAnalysis::new(trace)?.partial_depth(prefix_len, txn)
}

/// Step index of each read item's value-learned note (the last one, if the
/// transaction re-executed its reads).
pub fn value_learned_events(trace: &ExecutionTrace, txn: &TxnId) -> BTreeMap<ItemId, usize> {
    let mut out = BTreeMap::new();
    for s in &trace.steps {
        if s.txn.as_ref() != Some(txn) || !s.is_coordinator() {
            continue;
        }
        if let StepBody::Note { tag, data } = &s.body {
            if tag == NOTE_VALUE_LEARNED {
                if let Some(item) = data.get("item").and_then(|v| v.as_str()) {
                    out.insert(ItemId::new(item), s.i);
                }
            }
        }
    }
    out
}

/// A transaction's interval: from its coordinator invocation to the first
/// step after its response at which no handler of it is open and none of its
/// messages is in flight. `end = None` means the interval never closes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: Option<usize>,
}

impl Interval {
    pub fn overlaps(a: &Interval, b: &Interval) -> bool {
        a.start <= b.end.unwrap_or(usize::MAX) && b.start <= a.end.unwrap_or(usize::MAX)
    }
}

pub fn intervals(trace: &ExecutionTrace) -> BTreeMap<TxnId, Interval> {
    #[derive(Default)]
    struct Open {
        start: usize,
        responded: bool,
        handlers: BTreeSet<u64>,
        inflight: BTreeSet<u64>,
        end: Option<usize>,
    }
    let mut open: BTreeMap<TxnId, Open> = BTreeMap::new();
    for s in &trace.steps {
        let Some(txn) = &s.txn else { continue };
        if matches!(s.body, StepBody::Invoke) && s.is_coordinator() {
            open.insert(txn.clone(), Open { start: s.i, ..Open::default() });
        }
        let Some(o) = open.get_mut(txn) else { continue };
        if let Some(h) = s.h {
            o.handlers.insert(h);
        }
        match &s.body {
            StepBody::Send { msg_id, .. } => {
                o.inflight.insert(*msg_id);
            }
            StepBody::Recv { msg_id, .. } => {
                o.inflight.remove(msg_id);
            }
            StepBody::Note { tag, data } if tag == NOTE_DROP => {
                if let Some(id) = data.get("msgId").and_then(|v| v.as_u64()) {
                    o.inflight.remove(&id);
                }
            }
            StepBody::Response { .. } => {
                if let Some(h) = s.h {
                    o.handlers.remove(&h);
                }
                if s.is_coordinator() {
                    o.responded = true;
                }
            }
            _ => {}
        }
        if o.end.is_none() && o.responded && o.handlers.is_empty() && o.inflight.is_empty() {
            o.end = Some(s.i);
        }
    }
    // Handlers killed by a crash never respond.
    let crashed: BTreeSet<usize> = trace.crashed_nodes().into_iter().collect();
    if !crashed.is_empty() {
        let mut killed: BTreeSet<u64> = BTreeSet::new();
        for s in &trace.steps {
            if let (Some(h), Some(p)) = (s.h, s.proc) {
                if p.node.is_some_and(|n| crashed.contains(&n)) {
                    killed.insert(h);
                }
            }
        }
        let last = trace.steps.len().saturating_sub(1);
        for o in open.values_mut() {
            if o.end.is_none() && o.responded && o.inflight.is_empty() && o.handlers.is_subset(&killed) {
                o.end = Some(last);
            }
        }
    }
    open.into_iter().map(|(t, o)| (t, Interval { start: o.start, end: o.end })).collect()
}

//! Serializability of committed histories.
//!
//! Two independent deciders: an exact permutation search over serial orders
//! (capped at eight transactions) and a polygraph search that enumerates
//! read-from choices and resolves write-order constraints by backtracking.

use std::collections::{BTreeMap, BTreeSet};

use super::{CheckError, DepEdge, DepKind, PropertyTag, Verdict, Witness};
use crate::txmodel::analysis::AnalysisError;
use crate::txmodel::history::derive_history;
use crate::txmodel::{CommittedHistory, CommittedTxn, ExecutionTrace, OpKind};
use crate::value::{ItemId, TxnId, Value};

pub const BRUTE_FORCE_CAP: usize = 8;

/// Replays `order` serially; `true` iff every read returns the last value
/// written before it (or the initial value).
pub fn is_legal_order(h: &CommittedHistory, order: &[usize]) -> bool {
    let mut state: BTreeMap<&ItemId, &Value> = BTreeMap::new();
    for &t in order {
        for op in &h.txns[t].ops {
            match op.kind {
                OpKind::Read => {
                    let cur = state.get(&op.item).map(|v| (*v).clone()).unwrap_or_else(|| h.initial(&op.item));
                    if cur != op.value {
                        return false;
                    }
                }
                OpKind::Write => {
                    state.insert(&op.item, &op.value);
                }
            }
        }
    }
    true
}

/// Exact search over all serial orders. `Ok(Some(order))` is a legal order.
pub fn brute_force(h: &CommittedHistory) -> Result<Option<Vec<usize>>, CheckError> {
    let n = h.txns.len();
    if n > BRUTE_FORCE_CAP {
        return Err(CheckError::TooLarge(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        if is_legal_order(h, &order) {
            return Ok(Some(order));
        }
        if !next_permutation(&mut order) {
            return Ok(None);
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Outcome of the polygraph decider.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphOutcome {
    Serializable(Vec<usize>),
    Cycle(Vec<DepEdge>),
    UnexplainedRead { txn: usize, item: ItemId, value: Value },
}

impl GraphOutcome {
    pub fn is_serializable(&self) -> bool {
        matches!(self, GraphOutcome::Serializable(_))
    }
}

/// Graph node 0 is a virtual transaction that wrote every initial value;
/// transaction `t` of the history is node `t + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Edge {
    from: usize,
    to: usize,
    kind: DepKind,
    item: usize,
}

struct Polygraph {
    n: usize,
    items: Vec<ItemId>,
    /// Per external read: (reader node, item, candidate writer nodes).
    reads: Vec<(usize, usize, Vec<usize>)>,
    /// Per item: writer nodes (including the virtual initial writer).
    writers: Vec<Vec<usize>>,
}

/// Final value each transaction leaves in each item it writes.
fn final_writes(t: &CommittedTxn) -> BTreeMap<&ItemId, &Value> {
    let mut out = BTreeMap::new();
    for op in &t.ops {
        if op.kind == OpKind::Write {
            out.insert(&op.item, &op.value);
        }
    }
    out
}

fn build(h: &CommittedHistory) -> Result<Polygraph, GraphOutcome> {
    let mut items: BTreeSet<ItemId> = h.initial.keys().cloned().collect();
    for t in &h.txns {
        items.extend(t.ops.iter().map(|o| o.item.clone()));
    }
    let items: Vec<ItemId> = items.into_iter().collect();
    let idx = |i: &ItemId| items.binary_search(i).expect("item indexed");
    let finals: Vec<_> = h.txns.iter().map(final_writes).collect();
    let mut writers = vec![vec![0usize]; items.len()];
    for (t, fw) in finals.iter().enumerate() {
        for item in fw.keys() {
            writers[idx(item)].push(t + 1);
        }
    }
    let mut reads = Vec::new();
    for (t, txn) in h.txns.iter().enumerate() {
        let mut own: BTreeMap<&ItemId, &Value> = BTreeMap::new();
        for op in &txn.ops {
            match op.kind {
                OpKind::Write => {
                    own.insert(&op.item, &op.value);
                }
                OpKind::Read => {
                    if let Some(v) = own.get(&op.item) {
                        if **v != op.value {
                            return Err(GraphOutcome::UnexplainedRead { txn: t, item: op.item.clone(), value: op.value.clone() });
                        }
                        continue;
                    }
                    let x = idx(&op.item);
                    let cands: Vec<usize> = writers[x]
                        .iter()
                        .copied()
                        .filter(|&w| {
                            if w == 0 {
                                h.initial(&op.item) == op.value
                            } else {
                                w != t + 1 && finals[w - 1].get(&op.item).is_some_and(|v| **v == op.value)
                            }
                        })
                        .collect();
                    if cands.is_empty() {
                        return Err(GraphOutcome::UnexplainedRead { txn: t, item: op.item.clone(), value: op.value.clone() });
                    }
                    reads.push((t + 1, x, cands));
                }
            }
        }
    }
    Ok(Polygraph { n: h.txns.len() + 1, items, reads, writers })
}

struct Graph {
    adj: Vec<Vec<(usize, Edge)>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    /// A path `from → … → to` as edges, if one exists.
    fn path(&self, from: usize, to: usize) -> Option<Vec<Edge>> {
        let mut prev: Vec<Option<Edge>> = vec![None; self.adj.len()];
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                let mut out = Vec::new();
                let mut cur = to;
                while cur != from {
                    let e = prev[cur].expect("path recorded");
                    out.push(e);
                    cur = e.from;
                }
                out.reverse();
                return Some(out);
            }
            for &(v, e) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some(e);
                    stack.push(v);
                }
            }
        }
        None
    }

    /// Adds `e` unless it would close a cycle; returns the cycle otherwise.
    fn try_add(&mut self, e: Edge) -> Result<(), Vec<Edge>> {
        if e.from == e.to {
            return Err(vec![e]);
        }
        if let Some(mut back) = self.path(e.to, e.from) {
            back.insert(0, e);
            return Err(back);
        }
        self.adj[e.from].push((e.to, e));
        Ok(())
    }

    fn pop(&mut self, e: Edge) {
        let list = &mut self.adj[e.from];
        let pos = list.iter().rposition(|(_, x)| *x == e).expect("edge present");
        list.remove(pos);
    }

    fn topo_order(&self) -> Vec<usize> {
        let n = self.adj.len();
        let mut indeg = vec![0usize; n];
        for list in &self.adj {
            for &(v, _) in list {
                indeg[v] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut out = Vec::new();
        while let Some(u) = ready.pop_first() {
            out.push(u);
            for &(v, _) in &self.adj[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        out
    }
}

/// Constraints implied by one read-from assignment: fixed edges plus
/// either-or pairs for every other writer of a read item.
fn constraints(p: &Polygraph, choice: &[usize]) -> (Vec<Edge>, Vec<(Edge, Edge)>) {
    let mut fixed = Vec::new();
    let mut either = Vec::new();
    for (r, &(reader, x, ref cands)) in p.reads.iter().enumerate() {
        let w = cands[choice[r]];
        fixed.push(Edge { from: w, to: reader, kind: DepKind::ReadFrom, item: x });
        for &other in &p.writers[x] {
            if other == w || other == reader {
                continue;
            }
            if other == 0 {
                // The initial writer precedes everything.
                fixed.push(Edge { from: 0, to: w, kind: DepKind::WriteOrder, item: x });
                continue;
            }
            if w == 0 {
                fixed.push(Edge { from: reader, to: other, kind: DepKind::AntiDependency, item: x });
                continue;
            }
            either.push((
                Edge { from: other, to: w, kind: DepKind::WriteOrder, item: x },
                Edge { from: reader, to: other, kind: DepKind::AntiDependency, item: x },
            ));
        }
    }
    // Every real writer follows the initial writer.
    for v in 1..p.n {
        fixed.push(Edge { from: 0, to: v, kind: DepKind::WriteOrder, item: usize::MAX });
    }
    fixed.sort();
    fixed.dedup();
    either.sort();
    either.dedup();
    (fixed, either)
}

fn resolve(g: &mut Graph, either: &[(Edge, Edge)]) -> bool {
    let Some((&(a, b), rest)) = either.split_first() else { return true };
    for e in [a, b] {
        if g.try_add(e).is_ok() {
            if resolve(g, rest) {
                return true;
            }
            g.pop(e);
        }
    }
    false
}

/// Greedy pass over one assignment that stops at the first forced cycle.
fn conflict_cycle(p: &Polygraph, choice: &[usize]) -> Vec<Edge> {
    let (fixed, either) = constraints(p, choice);
    let mut g = Graph::new(p.n);
    for e in fixed {
        if let Err(c) = g.try_add(e) {
            return c;
        }
    }
    for (a, b) in either {
        if g.try_add(a).is_ok() {
            continue;
        }
        match g.try_add(b) {
            Ok(()) => continue,
            Err(c) => return c,
        }
    }
    Vec::new()
}

/// Polygraph decider.
pub fn graph_check(h: &CommittedHistory) -> GraphOutcome {
    let p = match build(h) {
        Ok(p) => p,
        Err(out) => return out,
    };
    let mut choice = vec![0usize; p.reads.len()];
    loop {
        let (fixed, either) = constraints(&p, &choice);
        let mut g = Graph::new(p.n);
        if fixed.iter().all(|&e| g.try_add(e).is_ok()) && resolve(&mut g, &either) {
            let order = g.topo_order().into_iter().filter(|&v| v != 0).map(|v| v - 1).collect();
            return GraphOutcome::Serializable(order);
        }
        // Next read-from assignment.
        let mut r = 0;
        loop {
            if r == choice.len() {
                let zero = vec![0usize; p.reads.len()];
                let cycle = conflict_cycle(&p, &zero);
                return GraphOutcome::Cycle(label(h, &p, &cycle));
            }
            choice[r] += 1;
            if choice[r] < p.reads[r].2.len() {
                break;
            }
            choice[r] = 0;
            r += 1;
        }
    }
}

fn label(h: &CommittedHistory, p: &Polygraph, edges: &[Edge]) -> Vec<DepEdge> {
    let name = |v: usize| if v == 0 { TxnId::new("init") } else { h.txns[v - 1].txn.clone() };
    edges
        .iter()
        .map(|e| DepEdge {
            from: name(e.from),
            to: name(e.to),
            kind: e.kind,
            item: p.items.get(e.item).cloned().unwrap_or_else(|| ItemId::new("*")),
        })
        .collect()
}

/// Re-validates a cycle witness against the history: consecutive edges
/// chain into a cycle and every edge matches a real read/write relation.
pub fn cycle_is_sound(h: &CommittedHistory, edges: &[DepEdge]) -> bool {
    if edges.is_empty() {
        return false;
    }
    let closes = edges.iter().zip(edges.iter().cycle().skip(1)).all(|(a, b)| a.to == b.from);
    let txn = |id: &TxnId| h.txns.iter().find(|t| &t.txn == id);
    let reads = |t: &CommittedTxn, x: &ItemId| t.ops.iter().any(|o| o.kind == OpKind::Read && &o.item == x);
    let writes = |t: &CommittedTxn, x: &ItemId| t.ops.iter().any(|o| o.kind == OpKind::Write && &o.item == x);
    closes
        && edges.iter().all(|e| {
            let (Some(a), Some(b)) = (txn(&e.from), txn(&e.to)) else { return false };
            match e.kind {
                DepKind::ReadFrom => {
                    let fw = final_writes(a);
                    b.ops.iter().any(|o| o.kind == OpKind::Read && o.item == e.item && fw.get(&e.item) == Some(&&o.value))
                }
                DepKind::AntiDependency => reads(a, &e.item) && writes(b, &e.item),
                DepKind::WriteOrder => writes(a, &e.item) && writes(b, &e.item),
            }
        })
}

/// Serializability of a committed history. Brute force decides when the
/// history is small enough; the polygraph supplies the failure witness
/// and decides alone above the cap.
pub fn check_serializability(h: &CommittedHistory) -> Result<Verdict, CheckError> {
    let names = |order: &[usize]| order.iter().map(|&t| h.txns[t].txn.clone()).collect::<Vec<_>>();
    let graph = graph_check(h);
    let serial = if h.len() <= BRUTE_FORCE_CAP {
        brute_force(h)?
    } else {
        match &graph {
            GraphOutcome::Serializable(order) => Some(order.clone()),
            _ => None,
        }
    };
    let n = h.len();
    match serial {
        Some(order) => Ok(Verdict::pass_with(
            PropertyTag::Serializability,
            Witness::SerialOrder { order: names(&order) },
            format!("{n} committed transactions admit a legal serial order"),
        )),
        None => {
            let witness = match graph {
                GraphOutcome::Cycle(edges) => Witness::Cycle { edges },
                GraphOutcome::UnexplainedRead { txn, item, value } => {
                    Witness::UnexplainedRead { txn: h.txns[txn].txn.clone(), item, value }
                }
                GraphOutcome::Serializable(order) => {
                    return Err(CheckError::Precondition(format!(
                        "deciders disagree: polygraph found order {:?}",
                        names(&order)
                    )))
                }
            };
            Ok(Verdict::fail(PropertyTag::Serializability, witness, format!("no legal serial order of {n} committed transactions")))
        }
    }
}

pub fn check_trace_serializability(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    let h = derive_history(trace).map_err(|e: AnalysisError| CheckError::Analysis(e))?;
    check_serializability(&h)
}

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde_json::json;

use super::policy::{FairPolicy, Policy, RandomPolicy};
use super::process::{Endpoint, MsgKey, ProcessRef};
use super::schedule::{Completion, Decision, Schedule};
use super::{SimConfig, SimError};
use crate::memory::Memory;
use crate::protocols::{Action, AlgorithmVariant, Coordinator, Layout, MsgKind, NodeMachine, ProtocolMessage};
use crate::txmodel::trace::NOTE_DROP;
use crate::txmodel::{ExecutionTrace, Scenario, ScheduledDecision, Step, StepBody, TraceMeta, TransactionProgram, TxnResult};
use crate::value::{NodeId, TxnId, Value};

/// A message in flight.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub msg_id: u64,
    pub key: MsgKey,
    pub src: ProcessRef,
    pub payload: ProtocolMessage,
    pub sent_tick: u64,
    pub sent_at: usize,
}

#[derive(Clone, Debug)]
struct NodeHandler {
    h: u64,
    txn: TxnId,
    machine: NodeMachine,
}

#[derive(Clone, Debug)]
struct ActiveCoord {
    h: u64,
    machine: Coordinator,
    armed_since: Option<u64>,
}

#[derive(Clone, Debug)]
struct ClientSlot {
    queue: Arc<[TransactionProgram]>,
    next: usize,
    active: Option<ActiveCoord>,
}

/// How a scheduling choice relates to the fair policy's priorities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiceClass {
    Invoke,
    Deliver { msg_id: u64 },
    Handler { h: u64, spinning: bool },
    Timeout,
    Crash,
}

/// Simulator state. Cloning yields an independent copy, which the explorer
/// uses to branch.
#[derive(Clone, Debug)]
pub struct Sim {
    cfg: SimConfig,
    algorithm: AlgorithmVariant,
    scenario: Arc<Scenario>,
    layout: Arc<Layout>,
    memory: Memory,
    crashed: Vec<bool>,
    nodes: Vec<Vec<Option<NodeHandler>>>,
    clients: Vec<ClientSlot>,
    pending: BTreeMap<u64, Message>,
    key_seq: BTreeMap<(Endpoint, Endpoint, TxnId, MsgKind), u32>,
    results: BTreeMap<TxnId, TxnResult>,
    tick: u64,
    next_msg_id: u64,
    next_h: u64,
    crashes: usize,
    n_steps: usize,
    record: bool,
    steps: Vec<Step>,
    decisions: Vec<ScheduledDecision>,
}

impl Sim {
    pub fn new(cfg: SimConfig, algorithm: AlgorithmVariant, scenario: &Scenario) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut scenario = scenario.clone();
        scenario.nodes = Some(scenario.nodes.unwrap_or(cfg.n_nodes).max(cfg.n_nodes));
        scenario.validate()?;
        let n_nodes = scenario.n_nodes();
        let layout = Layout::new(&scenario, algorithm, n_nodes, cfg.delta);
        let mut memory = Memory::new();
        for (obj, v) in layout.objects() {
            memory.declare(obj, v);
        }
        let n_clients = scenario.n_clients().max(cfg.n_clients);
        let clients = (0..n_clients)
            .map(|c| ClientSlot {
                queue: scenario.transactions.iter().filter(|t| t.client == c).cloned().collect(),
                next: 0,
                active: None,
            })
            .collect();
        Ok(Self {
            nodes: vec![vec![None; cfg.procs_per_node]; n_nodes],
            crashed: vec![false; n_nodes],
            cfg,
            algorithm,
            scenario: Arc::new(scenario),
            layout: Arc::new(layout),
            memory,
            clients,
            pending: BTreeMap::new(),
            key_seq: BTreeMap::new(),
            results: BTreeMap::new(),
            tick: 0,
            next_msg_id: 0,
            next_h: 0,
            crashes: 0,
            n_steps: 0,
            record: true,
            steps: Vec::new(),
            decisions: Vec::new(),
        })
    }

    /// Stops recording trace steps (exploration only needs end states).
    pub fn without_trace(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn results(&self) -> &BTreeMap<TxnId, TxnResult> {
        &self.results
    }

    pub fn decisions(&self) -> &[ScheduledDecision] {
        &self.decisions
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn pending(&self) -> impl Iterator<Item = &Message> {
        self.pending.values()
    }

    pub fn is_crashed(&self, node: NodeId) -> bool {
        self.crashed[node]
    }

    pub fn crash_budget_left(&self) -> usize {
        self.scenario.f.saturating_sub(self.crashes)
    }

    pub fn into_trace(self, schedule: Schedule) -> ExecutionTrace {
        ExecutionTrace {
            steps: self.steps,
            meta: TraceMeta {
                scenario: (*self.scenario).clone(),
                algorithm: self.algorithm,
                config: self.cfg,
                schedule,
                decisions: self.decisions,
            },
        }
    }

    // ----- enabled choices -------------------------------------------------

    /// Every enabled decision: progress choices plus crash decisions while
    /// the crash budget lasts.
    pub fn enabled(&self) -> Vec<Decision> {
        let mut out = self.progress_choices();
        if self.crashes < self.scenario.f {
            out.extend((0..self.crashed.len()).filter(|&n| !self.crashed[n]).map(|node| Decision::Crash { node }));
        }
        out
    }

    /// Enabled decisions other than crashes. Empty means quiescent.
    pub fn progress_choices(&self) -> Vec<Decision> {
        let mut steps = Vec::new();
        for (idx, c) in self.clients.iter().enumerate() {
            let proc = ProcessRef::client(idx);
            match &c.active {
                Some(a) if a.machine.next() != Action::Await => steps.push(Decision::Step { proc }),
                Some(_) if self.timeout_due(idx) => steps.push(Decision::Step { proc }),
                Some(_) => {}
                None if c.next < c.queue.len() => steps.push(Decision::Step { proc }),
                None => {}
            }
        }
        for (node, procs) in self.nodes.iter().enumerate() {
            if self.crashed[node] {
                continue;
            }
            for (p, slot) in procs.iter().enumerate() {
                if slot.is_some() {
                    steps.push(Decision::Step { proc: ProcessRef::node_proc(node, p) });
                }
            }
        }
        let deliverable: Vec<&Message> = self.channel_heads().into_iter().filter(|m| self.can_deliver(m)).collect();
        if let Some(forced) = self.forced_choice(&deliverable) {
            return vec![forced];
        }
        steps.extend(deliverable.iter().map(|m| Decision::Deliver { key: m.key.clone(), proc: None }));
        if steps.is_empty() {
            // Nothing else can happen: an armed client may give up early.
            for (idx, c) in self.clients.iter().enumerate() {
                if c.active.is_some() && self.timeout_possible(idx) {
                    steps.push(Decision::Step { proc: ProcessRef::client(idx) });
                }
            }
        }
        steps
    }

    pub fn is_quiescent(&self) -> bool {
        self.progress_choices().is_empty()
    }

    pub fn is_enabled(&self, d: &Decision) -> bool {
        match d {
            Decision::Deliver { key, proc: Some(p) } => {
                let base = Decision::Deliver { key: key.clone(), proc: None };
                let idle = match key.dst {
                    Endpoint::Node { node } => self.nodes[node].get(*p).is_some_and(Option::is_none),
                    Endpoint::Client { .. } => false,
                };
                idle && self.enabled().contains(&base)
            }
            _ => self.enabled().contains(d),
        }
    }

    /// Oldest undelivered message on every (src, dst) channel.
    fn channel_heads(&self) -> Vec<&Message> {
        let mut seen = BTreeSet::new();
        self.pending.values().filter(|m| seen.insert((m.key.src, m.key.dst))).collect()
    }

    fn can_deliver(&self, m: &Message) -> bool {
        match m.key.dst {
            Endpoint::Node { node } => {
                !self.crashed[node]
                    && self.nodes[node].iter().any(Option::is_none)
                    && !self.nodes[node].iter().flatten().any(|h| h.txn == m.key.txn)
            }
            Endpoint::Client { idx } => self.clients[idx]
                .active
                .as_ref()
                .is_some_and(|a| a.machine.program().txn_id == m.key.txn),
        }
    }

    /// Process on `m`'s destination node running a handler of `m`'s
    /// transaction, which keeps `m` from being received.
    fn blocker(&self, m: &Message) -> Option<(NodeId, usize)> {
        let Endpoint::Node { node } = m.key.dst else { return None };
        let p = self.nodes[node].iter().position(|h| h.as_ref().is_some_and(|h| h.txn == m.key.txn))?;
        Some((node, p))
    }

    /// Steps the handler on `(node, p)` needs to finish when run alone;
    /// `None` while it spins on a lock held by someone else.
    fn remaining_steps(&self, node: NodeId, p: usize) -> Option<u64> {
        let handler = self.nodes[node][p].as_ref()?;
        if handler.machine.is_spinning() {
            return None;
        }
        self.run_alone(node, handler.machine.clone())
    }

    /// Steps of the handler `m` would start, run alone from the current state.
    fn handler_steps(&self, m: &Message) -> u64 {
        let (Endpoint::Node { node }, Endpoint::Client { idx }) = (m.key.dst, m.key.src) else { return 0 };
        NodeMachine::for_message(&self.layout, node, idx, &m.payload)
            .and_then(|machine| self.run_alone(node, machine))
            .unwrap_or(0)
    }

    fn run_alone(&self, node: NodeId, mut machine: NodeMachine) -> Option<u64> {
        const CAP: u64 = 256;
        let mut memory = self.memory.clone();
        for n in 1..=CAP {
            let ret = match machine.next() {
                Action::Respond(_) => return Some(n),
                Action::Prim { obj, op } => memory.apply(node, &obj, &op).ok()?.ret,
                _ => Value::Nil,
            };
            machine.advance(&ret);
        }
        None
    }

    /// After GST every message must arrive within Δ ticks of its send (or of
    /// GST). Once the work needed to meet some deadline fills the time left,
    /// only the earliest-deadline message that can make progress may move:
    /// it is received, or the handler keeping it out takes a step.
    fn forced_choice(&self, deliverable: &[&Message]) -> Option<Decision> {
        let gst = self.cfg.gst?;
        if self.tick < gst {
            return None;
        }
        let deadline = |m: &Message| m.sent_tick.max(gst) + self.cfg.delta;
        let mut all: Vec<&Message> = self.pending.values().collect();
        all.sort_by_key(|m| (deadline(m), m.msg_id));
        // Work ahead of each message: receptions, running blockers, and the
        // handlers earlier messages of the same transaction will start there.
        let mut need = 0;
        let mut urgent = false;
        let mut queued: BTreeMap<(NodeId, &TxnId), u64> = BTreeMap::new();
        for m in &all {
            need += 1;
            if let Endpoint::Node { node } = m.key.dst {
                let ahead = match queued.get(&(node, &m.key.txn)) {
                    Some(&steps) => steps,
                    None => self.blocker(m).and_then(|(node, p)| self.remaining_steps(node, p)).unwrap_or(0),
                };
                need += ahead;
                queued.insert((node, &m.key.txn), self.handler_steps(m));
            }
            if deadline(m) < self.tick + need + 1 {
                urgent = true;
                break;
            }
        }
        if !urgent {
            return None;
        }
        all.iter().find_map(|first| {
            if let Some(m) = deliverable.iter().find(|m| m.msg_id == first.msg_id) {
                return Some(Decision::Deliver { key: m.key.clone(), proc: None });
            }
            let (node, p) = self.blocker(first)?;
            self.remaining_steps(node, p)?;
            Some(Decision::Step { proc: ProcessRef::node_proc(node, p) })
        })
    }

    fn timeout_possible(&self, idx: usize) -> bool {
        let Some(a) = &self.clients[idx].active else { return false };
        a.machine.next() == Action::Await
            && a.machine.timeout_armed(&self.layout)
            && a.machine.missing().iter().any(|&n| self.crashed[n])
    }

    fn timeout_due(&self, idx: usize) -> bool {
        let Some(a) = &self.clients[idx].active else { return false };
        self.timeout_possible(idx) && a.armed_since.is_some_and(|s| self.tick >= s + self.layout.timeout)
    }

    /// Priority information for the fair policy.
    pub fn classify(&self, d: &Decision) -> ChoiceClass {
        match d {
            Decision::Crash { .. } => ChoiceClass::Crash,
            Decision::Deliver { key, .. } => ChoiceClass::Deliver {
                msg_id: self.pending.values().find(|m| &m.key == key).map(|m| m.msg_id).unwrap_or(u64::MAX),
            },
            Decision::Step { proc } => match proc.node {
                Some(node) => match &self.nodes[node][proc.idx] {
                    Some(h) => ChoiceClass::Handler { h: h.h, spinning: h.machine.is_spinning() },
                    None => ChoiceClass::Crash,
                },
                None => match &self.clients[proc.idx].active {
                    None => ChoiceClass::Invoke,
                    Some(a) if a.machine.next() == Action::Await => ChoiceClass::Timeout,
                    Some(a) => ChoiceClass::Handler { h: a.h, spinning: false },
                },
            },
        }
    }

    /// Transaction whose handler occupies `proc`, if any.
    pub fn handler_txn(&self, proc: &ProcessRef) -> Option<&TxnId> {
        match proc.node {
            Some(node) => self.nodes[node][proc.idx].as_ref().map(|h| &h.txn),
            None => self.clients[proc.idx].active.as_ref().map(|a| &a.machine.program().txn_id),
        }
    }

    /// The next action of the handler running on `proc`, if any.
    pub fn peek(&self, proc: &ProcessRef) -> Option<Action> {
        match proc.node {
            Some(node) => self.nodes[node][proc.idx].as_ref().map(|h| h.machine.next()),
            None => self.clients[proc.idx].active.as_ref().map(|a| a.machine.next()),
        }
    }

    // ----- applying decisions ---------------------------------------------

    pub fn apply(&mut self, d: &Decision) -> Result<(), SimError> {
        if !self.is_enabled(d) {
            if let Decision::Crash { .. } = d {
                if self.crashes >= self.scenario.f {
                    return Err(SimError::CrashBudget(self.scenario.f));
                }
            }
            return Err(SimError::ScheduleStuck { index: self.decisions.len(), decision: describe(d) });
        }
        self.apply_unchecked(d)
    }

    /// Applies a decision already known to be enabled.
    pub fn apply_unchecked(&mut self, d: &Decision) -> Result<(), SimError> {
        if self.n_steps >= self.cfg.max_steps {
            return Err(SimError::StepLimit(self.cfg.max_steps));
        }
        let (txn, read_phase) = match d {
            Decision::Step { proc } if proc.is_client() => self.step_client(proc.idx)?,
            Decision::Step { proc } => self.step_node(proc.node.expect("node process"), proc.idx)?,
            Decision::Deliver { key, proc } => self.deliver(key, *proc),
            Decision::Crash { node } => {
                self.crash(*node);
                (None, false)
            }
        };
        self.decisions.push(ScheduledDecision { decision: d.clone(), txn, read_phase });
        self.tick += 1;
        Ok(())
    }

    fn push_step(&mut self, body: StepBody, proc: Option<ProcessRef>, txn: Option<TxnId>, h: Option<u64>) -> usize {
        let i = self.n_steps;
        self.n_steps += 1;
        if self.record {
            self.steps.push(Step { i, body, proc, txn, h, t: self.tick });
        }
        i
    }

    fn fresh_h(&mut self) -> u64 {
        self.next_h += 1;
        self.next_h - 1
    }

    fn step_client(&mut self, idx: usize) -> Result<(Option<TxnId>, bool), SimError> {
        let proc = ProcessRef::client(idx);
        let layout = Arc::clone(&self.layout);
        if self.clients[idx].active.is_none() {
            let slot = &mut self.clients[idx];
            let program = slot.queue[slot.next].clone();
            slot.next += 1;
            let txn = program.txn_id.clone();
            let h = self.fresh_h();
            let machine = Coordinator::new(program, &layout);
            self.clients[idx].active = Some(ActiveCoord { h, machine, armed_since: None });
            self.push_step(StepBody::Invoke, Some(proc), Some(txn.clone()), Some(h));
            self.rearm(idx);
            return Ok((Some(txn), false));
        }
        let (h, txn, read_phase, mut action) = {
            let a = self.clients[idx].active.as_ref().expect("active");
            (a.h, a.machine.program().txn_id.clone(), a.machine.in_read_phase(), a.machine.next())
        };
        if action == Action::Await {
            let a = self.clients[idx].active.as_mut().expect("active");
            a.machine.on_timeout(&layout);
            action = a.machine.next();
        }
        match action {
            Action::Send { dst, msg } => {
                self.send(proc, &txn, h, dst, msg);
                self.coord_mut(idx).on_done(&layout);
            }
            Action::Note { tag, data } => {
                self.push_step(StepBody::Note { tag: tag.to_string(), data }, Some(proc), Some(txn.clone()), Some(h));
                self.coord_mut(idx).on_done(&layout);
            }
            Action::Respond(result) => {
                let result = result.expect("coordinators respond with a result");
                self.push_step(
                    StepBody::Response {
                        outcome: Some(result.outcome),
                        read_set: Some(result.read_set.clone()),
                        write_set: Some(result.write_set.clone()),
                    },
                    Some(proc),
                    Some(txn.clone()),
                    Some(h),
                );
                self.results.insert(txn.clone(), result);
                self.clients[idx].active = None;
                let stale: Vec<u64> = self
                    .pending
                    .values()
                    .filter(|m| m.key.dst == Endpoint::Client { idx } && m.key.txn == txn)
                    .map(|m| m.msg_id)
                    .collect();
                for id in stale {
                    self.drop_pending(id);
                }
            }
            Action::Prim { .. } | Action::Await => unreachable!("coordinators neither access memory nor idle when stepped"),
        }
        self.rearm(idx);
        Ok((Some(txn), read_phase))
    }

    fn coord_mut(&mut self, idx: usize) -> &mut Coordinator {
        &mut self.clients[idx].active.as_mut().expect("active coordinator").machine
    }

    fn rearm(&mut self, idx: usize) {
        let tick = self.tick;
        let layout = Arc::clone(&self.layout);
        if let Some(a) = self.clients[idx].active.as_mut() {
            if a.machine.timeout_armed(&layout) {
                a.armed_since.get_or_insert(tick);
            } else {
                a.armed_since = None;
            }
        }
    }

    fn step_node(&mut self, node: NodeId, p: usize) -> Result<(Option<TxnId>, bool), SimError> {
        let proc = ProcessRef::node_proc(node, p);
        let (h, txn, read_phase, action) = {
            let hd = self.nodes[node][p].as_ref().expect("busy process");
            (hd.h, hd.txn.clone(), hd.machine.is_read_handler(), hd.machine.next())
        };
        let mut ret = Value::Nil;
        match action {
            Action::Prim { obj, op } => {
                let acc = self.memory.apply(node, &obj, &op)?;
                ret = acc.ret.clone();
                self.push_step(
                    StepBody::Prim { obj: acc.obj, op: acc.kind, nontrivial: acc.kind.is_nontrivial(), args: acc.args, ret: acc.ret },
                    Some(proc),
                    Some(txn.clone()),
                    Some(h),
                );
            }
            Action::Send { dst, msg } => self.send(proc, &txn, h, dst, msg),
            Action::Note { tag, data } => {
                self.push_step(StepBody::Note { tag: tag.to_string(), data }, Some(proc), Some(txn.clone()), Some(h));
            }
            Action::Respond(_) => {
                self.push_step(StepBody::Response { outcome: None, read_set: None, write_set: None }, Some(proc), Some(txn.clone()), Some(h));
                self.nodes[node][p] = None;
                return Ok((Some(txn), read_phase));
            }
            Action::Await => unreachable!("node handlers never block"),
        }
        self.nodes[node][p].as_mut().expect("busy process").machine.advance(&ret);
        Ok((Some(txn), read_phase))
    }

    fn send(&mut self, src: ProcessRef, txn: &TxnId, h: u64, dst: Endpoint, payload: ProtocolMessage) {
        let kind = payload.kind();
        let counter = self.key_seq.entry((src.endpoint(), dst, txn.clone(), kind)).or_insert(0);
        let key = MsgKey { src: src.endpoint(), dst, txn: txn.clone(), kind, seq: *counter };
        *counter += 1;
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;
        let sent_at = self.push_step(
            StepBody::Send { msg_id, key: key.clone(), dst, payload: payload.clone() },
            Some(src),
            Some(txn.clone()),
            Some(h),
        );
        let live = match dst {
            Endpoint::Node { node } => !self.crashed[node],
            Endpoint::Client { idx } => self.clients[idx].active.as_ref().is_some_and(|a| &a.machine.program().txn_id == txn),
        };
        let m = Message { msg_id, key, src, payload, sent_tick: self.tick, sent_at };
        if live {
            self.pending.insert(msg_id, m);
        } else {
            self.note_drop(&m);
        }
    }

    fn note_drop(&mut self, m: &Message) {
        self.push_step(
            StepBody::Note { tag: NOTE_DROP.to_string(), data: json!({ "msgId": m.msg_id, "key": m.key }) },
            None,
            Some(m.key.txn.clone()),
            None,
        );
    }

    fn drop_pending(&mut self, msg_id: u64) {
        if let Some(m) = self.pending.remove(&msg_id) {
            self.note_drop(&m);
        }
    }

    fn deliver(&mut self, key: &MsgKey, pinned: Option<usize>) -> (Option<TxnId>, bool) {
        let msg_id = self.pending.values().find(|m| &m.key == key).map(|m| m.msg_id).expect("enabled delivery");
        let m = self.pending.remove(&msg_id).expect("present");
        let read_phase = matches!(m.key.kind, MsgKind::Read | MsgKind::ReadReply);
        let recv = StepBody::Recv { msg_id, key: m.key.clone(), src: m.key.src, payload: m.payload.clone() };
        match m.key.dst {
            Endpoint::Node { node } => {
                let p = pinned.unwrap_or_else(|| self.nodes[node].iter().position(Option::is_none).expect("idle process"));
                let client = match m.key.src {
                    Endpoint::Client { idx } => idx,
                    Endpoint::Node { .. } => unreachable!("nodes only talk to clients"),
                };
                let h = self.fresh_h();
                self.push_step(recv, Some(ProcessRef::node_proc(node, p)), Some(m.key.txn.clone()), Some(h));
                if let Some(machine) = NodeMachine::for_message(&self.layout, node, client, &m.payload) {
                    self.nodes[node][p] = Some(NodeHandler { h, txn: m.key.txn.clone(), machine });
                }
            }
            Endpoint::Client { idx } => {
                let h = self.clients[idx].active.as_ref().expect("active").h;
                self.push_step(recv, Some(ProcessRef::client(idx)), Some(m.key.txn.clone()), Some(h));
                let from = m.key.src.node().expect("clients hear from nodes");
                let layout = Arc::clone(&self.layout);
                self.coord_mut(idx).on_receive(from, &m.payload, &layout);
                self.rearm(idx);
            }
        }
        (Some(m.key.txn), read_phase)
    }

    fn crash(&mut self, node: NodeId) {
        self.push_step(StepBody::Crash { node }, None, None, None);
        self.crashed[node] = true;
        self.crashes += 1;
        for slot in &mut self.nodes[node] {
            *slot = None;
        }
        let doomed: Vec<u64> = self.pending.values().filter(|m| m.key.dst == Endpoint::Node { node }).map(|m| m.msg_id).collect();
        for id in doomed {
            self.drop_pending(id);
        }
    }

    // ----- driving ----------------------------------------------------------

    pub fn drive(&mut self, schedule: &Schedule) -> Result<(), SimError> {
        match schedule {
            Schedule::Scripted { script, then } => {
                for d in script {
                    self.apply(d)?;
                }
                self.complete(*then)
            }
            Schedule::RandomSeeded { seed } => self.complete(Completion::Random { seed: *seed }),
            Schedule::ExhaustiveCursor { choices } => {
                for &c in choices {
                    let enabled = self.enabled();
                    let d = enabled.get(c).cloned().ok_or_else(|| SimError::ScheduleStuck {
                        index: self.decisions.len(),
                        decision: format!("choice #{c} of {}", enabled.len()),
                    })?;
                    self.apply_unchecked(&d)?;
                }
                self.complete(Completion::Fair)
            }
            Schedule::Fair => self.run_policy(&mut FairPolicy::sequential()),
            Schedule::FairConcurrent => self.run_policy(&mut FairPolicy::concurrent()),
        }
    }

    pub fn complete(&mut self, then: Completion) -> Result<(), SimError> {
        match then {
            Completion::Stop => Ok(()),
            Completion::Fair => self.run_policy(&mut FairPolicy::sequential()),
            Completion::Random { seed } => self.run_policy(&mut RandomPolicy::new(seed)),
        }
    }

    pub fn run_policy(&mut self, policy: &mut dyn Policy) -> Result<(), SimError> {
        while let Some(d) = policy.choose(self) {
            self.apply_unchecked(&d)?;
        }
        Ok(())
    }

    // ----- exploration support ---------------------------------------------

    /// Canonical digest of the state that determines all future behaviour.
    /// Ticks, message ids, handler ids and process indices are left out.
    pub fn fingerprint(&self) -> u128 {
        let mut buf = ByteSink::default();
        self.memory.hash(&mut buf);
        self.crashed.hash(&mut buf);
        self.crashes.hash(&mut buf);
        for procs in &self.nodes {
            let mut active: Vec<(&TxnId, &NodeMachine)> = procs.iter().flatten().map(|h| (&h.txn, &h.machine)).collect();
            active.sort_by(|a, b| a.0.cmp(b.0));
            active.hash(&mut buf);
        }
        for c in &self.clients {
            c.next.hash(&mut buf);
            c.active.as_ref().map(|a| &a.machine).hash(&mut buf);
        }
        for m in self.pending.values() {
            (m.key.src, m.key.dst, &m.key.txn, &m.payload).hash(&mut buf);
        }
        self.results.hash(&mut buf);
        let digest = |salt: u64| {
            let mut hs = DefaultHasher::new();
            salt.hash(&mut hs);
            hs.write(&buf.0);
            hs.finish()
        };
        (u128::from(digest(0x5eed)) << 64) | u128::from(digest(0xfeed))
    }
}

/// Collects hashed bytes so one traversal feeds both digests.
#[derive(Default)]
struct ByteSink(Vec<u8>);

impl Hasher for ByteSink {
    fn finish(&self) -> u64 {
        0
    }

    fn write(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }
}

fn describe(d: &Decision) -> String {
    serde_json::to_string(d).unwrap_or_else(|_| format!("{d:?}"))
}

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::json;

use super::{Action, Layout, ProtocolMessage, ReadEntry, SeqReport, TxnRecord, VariantTag, Vote, WriteEntry};
use crate::simkit::Endpoint;
use crate::txmodel::trace::{NOTE_TIMEOUT, NOTE_VALUE_LEARNED};
use crate::txmodel::{ItemValue, Outcome, TransactionProgram, TxnResult};
use crate::value::{ItemId, NodeId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Reading,
    Validating,
    Locking,
    Checking,
    /// Decided; draining the outbox before responding.
    Finishing,
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Reply {
    vote: Vote,
    val: Value,
    seq: i64,
    write_seqs: Vec<SeqReport>,
}

/// Client-side coordinator handler for one transaction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coordinator {
    program: TransactionProgram,
    phase: Phase,
    /// Re-execution counter; read replies from older rounds are ignored.
    round: u32,
    fallback: bool,
    read_idx: usize,
    outbox: VecDeque<(Endpoint, ProtocolMessage)>,
    pending_learned: Option<(ItemId, Value, i64)>,
    pending_timeout_note: bool,
    replies: BTreeMap<NodeId, Reply>,
    recorded: Vec<(ItemId, Value, i64)>,
    writes: Vec<(ItemId, Value)>,
    txn: Option<TxnRecord>,
    targets: Vec<NodeId>,
    lock_seqs: Vec<SeqReport>,
    outcome: Option<Outcome>,
}

impl Coordinator {
    pub fn new(program: TransactionProgram, layout: &Layout) -> Self {
        let mut c = Self {
            program,
            phase: Phase::Reading,
            round: 0,
            fallback: false,
            read_idx: 0,
            outbox: VecDeque::new(),
            pending_learned: None,
            pending_timeout_note: false,
            replies: BTreeMap::new(),
            recorded: Vec::new(),
            writes: Vec::new(),
            txn: None,
            targets: Vec::new(),
            lock_seqs: Vec::new(),
            outcome: None,
        };
        c.start_reads(layout);
        c
    }

    pub fn program(&self) -> &TransactionProgram {
        &self.program
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn in_read_phase(&self) -> bool {
        self.phase == Phase::Reading
    }

    pub fn next(&self) -> Action {
        if self.pending_timeout_note {
            return Action::Note { tag: NOTE_TIMEOUT, data: json!({ "round": self.round }) };
        }
        if let Some((dst, msg)) = self.outbox.front() {
            return Action::Send { dst: *dst, msg: msg.clone() };
        }
        if let Some((item, val, seq)) = &self.pending_learned {
            return Action::Note { tag: NOTE_VALUE_LEARNED, data: json!({ "item": item, "val": val, "seqNum": seq }) };
        }
        match self.phase {
            Phase::Finishing => Action::Respond(Some(self.result())),
            _ => Action::Await,
        }
    }

    /// Acknowledges the action returned by [`Coordinator::next`].
    pub fn on_done(&mut self, layout: &Layout) {
        if self.pending_timeout_note {
            self.pending_timeout_note = false;
        } else if self.outbox.pop_front().is_some() {
        } else if self.pending_learned.take().is_some() {
            self.read_idx += 1;
            self.next_read(layout);
        } else if self.phase == Phase::Finishing {
            self.phase = Phase::Done;
        }
    }

    pub fn on_receive(&mut self, from: NodeId, msg: &ProtocolMessage, layout: &Layout) {
        match (self.phase, msg) {
            (Phase::Reading, ProtocolMessage::ReadReply { key, round, val, seq_num, vote }) => {
                let current = self.program.read_set.get(self.read_idx);
                if *round != self.round || current != Some(key) || self.pending_learned.is_some() {
                    return;
                }
                if !layout.stores(from, key) {
                    return;
                }
                self.replies.insert(from, Reply { vote: *vote, val: val.clone(), seq: *seq_num, write_seqs: Vec::new() });
                if self.replies.len() >= layout.quorum() {
                    self.finish_read(key.clone());
                }
            }
            (Phase::Validating, ProtocolMessage::ValidateReply { vote, write_seqs })
            | (Phase::Locking, ProtocolMessage::LockReply { vote, write_seqs }) => {
                self.record_vote(from, *vote, write_seqs.clone());
                self.try_advance(layout);
            }
            (Phase::Checking, ProtocolMessage::CheckReply { vote }) => {
                self.record_vote(from, *vote, Vec::new());
                self.try_advance(layout);
            }
            _ => {}
        }
    }

    /// Whether the client may give up on unresponsive nodes.
    pub fn timeout_armed(&self, layout: &Layout) -> bool {
        layout.tag() == VariantTag::NoSeamlessFt
            && !self.fallback
            && self.phase == Phase::Validating
            && self.outbox.is_empty()
    }

    /// Target nodes that have not replied in the current round.
    pub fn missing(&self) -> Vec<NodeId> {
        self.targets.iter().copied().filter(|n| !self.replies.contains_key(n)).collect()
    }

    /// Switches to the two-round fallback: tell every node to drop this
    /// transaction's locks, then re-execute from scratch.
    pub fn on_timeout(&mut self, layout: &Layout) {
        let txn = self.txn.clone().expect("timeout only during validation");
        self.fallback = true;
        self.pending_timeout_note = true;
        self.round += 1;
        self.outbox = layout
            .all_nodes()
            .into_iter()
            .map(|n| (Endpoint::Node { node: n }, ProtocolMessage::Restart { txn: txn.clone() }))
            .collect();
        self.start_reads(layout);
    }

    fn start_reads(&mut self, layout: &Layout) {
        self.phase = Phase::Reading;
        self.read_idx = 0;
        self.recorded.clear();
        self.writes.clear();
        self.txn = None;
        self.targets.clear();
        self.next_read(layout);
    }

    fn next_read(&mut self, layout: &Layout) {
        self.replies.clear();
        match self.program.read_set.get(self.read_idx).cloned() {
            Some(key) => {
                for &node in layout.group(&key) {
                    self.outbox.push_back((Endpoint::Node { node }, ProtocolMessage::Read { key: key.clone(), round: self.round }));
                }
            }
            None => self.begin_validation(layout),
        }
    }

    fn finish_read(&mut self, key: ItemId) {
        if self.replies.values().any(|r| r.vote == Vote::Abort) {
            self.outbox.clear();
            self.decide(Outcome::Abort, Vec::new());
            return;
        }
        // Highest sequence number wins; ties go to the lowest node id.
        let best = self
            .replies
            .values()
            .fold(None::<&Reply>, |acc, r| match acc {
                Some(a) if a.seq >= r.seq => Some(a),
                _ => Some(r),
            })
            .expect("quorum is non-empty");
        let entry = (key, best.val.clone(), best.seq);
        self.recorded.push(entry.clone());
        self.pending_learned = Some(entry);
    }

    fn begin_validation(&mut self, layout: &Layout) {
        let reads: Vec<(ItemId, Value)> = self.recorded.iter().map(|(k, v, _)| (k.clone(), v.clone())).collect();
        self.writes = self.program.realized_writes(&reads, |i| layout.initial(i));
        let txn = TxnRecord {
            tid: self.program.txn_id.clone(),
            reads: self.recorded.iter().map(|(k, _, s)| ReadEntry { key: k.clone(), seq_num: *s }).collect(),
            writes: self
                .writes
                .iter()
                .map(|(k, v)| WriteEntry { key: k.clone(), new_val: v.clone(), seq_num: None })
                .collect(),
        };
        let items = self.items_of(&txn);
        self.txn = Some(txn.clone());
        if items.is_empty() {
            self.outcome = Some(Outcome::Commit);
            self.phase = Phase::Finishing;
            return;
        }
        let writer = !txn.is_read_only();
        let (targets, first) = match layout.tag() {
            VariantTag::Base | VariantTag::WeakIrOnly => (layout.nodes_of(&items), Phase::Validating),
            VariantTag::NoFastDecision => (layout.nodes_of(&items), Phase::Locking),
            VariantTag::NoSeamlessFt if self.fallback => (layout.all_nodes(), Phase::Locking),
            VariantTag::NoSeamlessFt => (layout.all_nodes(), Phase::Validating),
            VariantTag::NoDdap if writer => (layout.all_nodes(), Phase::Validating),
            VariantTag::NoDdap => (layout.nodes_of(&items), Phase::Validating),
        };
        self.targets = targets;
        self.broadcast_round(first, txn);
    }

    fn broadcast_round(&mut self, phase: Phase, txn: TxnRecord) {
        self.phase = phase;
        self.replies.clear();
        for &node in &self.targets {
            let msg = match phase {
                Phase::Validating => ProtocolMessage::Validate { txn: txn.clone() },
                Phase::Locking => ProtocolMessage::Lock { txn: txn.clone() },
                Phase::Checking => ProtocolMessage::Check { txn: txn.clone() },
                _ => unreachable!("not a request round"),
            };
            self.outbox.push_back((Endpoint::Node { node }, msg));
        }
    }

    fn items_of(&self, txn: &TxnRecord) -> BTreeSet<ItemId> {
        txn.reads.iter().map(|r| r.key.clone()).chain(txn.writes.iter().map(|w| w.key.clone())).collect()
    }

    fn record_vote(&mut self, from: NodeId, vote: Vote, write_seqs: Vec<SeqReport>) {
        if self.targets.contains(&from) {
            self.replies.entry(from).or_insert(Reply { vote, val: Value::Nil, seq: 0, write_seqs });
        }
    }

    fn quorum_met(&self, layout: &Layout) -> bool {
        let txn = self.txn.as_ref().expect("validation has a record");
        let per_group = self.items_of(txn).iter().all(|item| {
            let got = layout.group(item).iter().filter(|n| self.replies.contains_key(n)).count();
            got >= layout.quorum()
        });
        let total = self.replies.len();
        let n_minus_f = layout.n_nodes.saturating_sub(layout.f);
        match (layout.tag(), self.phase) {
            (VariantTag::NoSeamlessFt, Phase::Validating) => total == self.targets.len(),
            (VariantTag::NoSeamlessFt, _) => per_group && total >= n_minus_f,
            (VariantTag::NoDdap, _) if !txn.is_read_only() => per_group && total >= n_minus_f,
            _ => per_group,
        }
    }

    fn try_advance(&mut self, layout: &Layout) {
        if !self.quorum_met(layout) {
            return;
        }
        let all_commit = self.replies.values().all(|r| r.vote == Vote::Commit);
        let txn = self.txn.clone().expect("validation has a record");
        if !all_commit {
            self.decide(Outcome::Abort, Vec::new());
            return;
        }
        match self.phase {
            Phase::Locking => {
                self.lock_seqs = self.replies.values().flat_map(|r| r.write_seqs.clone()).collect();
                self.broadcast_round(Phase::Checking, txn);
            }
            Phase::Checking => {
                let seqs = self.lock_seqs.clone();
                self.decide(Outcome::Commit, seqs);
            }
            _ => {
                let seqs: Vec<SeqReport> = self.replies.values().flat_map(|r| r.write_seqs.clone()).collect();
                self.decide(Outcome::Commit, seqs);
            }
        }
    }

    fn decide(&mut self, outcome: Outcome, seqs: Vec<SeqReport>) {
        self.outcome = Some(outcome);
        self.phase = Phase::Finishing;
        let Some(mut txn) = self.txn.clone() else {
            // Aborted during the read phase: nothing is locked anywhere.
            self.writes.clear();
            return;
        };
        if outcome == Outcome::Commit {
            for w in &mut txn.writes {
                let max = seqs.iter().filter(|s| s.key == w.key).map(|s| s.seq_num).max().unwrap_or(0);
                w.seq_num = Some(max + 1);
            }
            self.txn = Some(txn.clone());
        }
        for &node in &self.targets {
            let msg = match outcome {
                Outcome::Commit => ProtocolMessage::Commit { txn: txn.clone() },
                Outcome::Abort => ProtocolMessage::Abort { txn: txn.clone() },
            };
            self.outbox.push_back((Endpoint::Node { node }, msg));
        }
    }

    fn result(&self) -> TxnResult {
        TxnResult {
            outcome: self.outcome.expect("decided"),
            read_set: self.recorded.iter().map(|(k, v, _)| ItemValue::from((k.clone(), v.clone()))).collect(),
            write_set: self.writes.iter().cloned().map(ItemValue::from).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios;
    use crate::protocols::MsgKind;

    fn layout(tag: VariantTag) -> Layout {
        let s = scenarios::strong_ir_probe();
        Layout::new(&s, tag.into(), 3, 16)
    }

    fn coordinator(layout: &Layout) -> Coordinator {
        Coordinator::new(scenarios::strong_ir_probe().transactions[0].clone(), layout)
    }

    /// Performs sends and notes until the coordinator blocks or responds;
    /// returns the sent messages.
    fn drain(c: &mut Coordinator, layout: &Layout) -> Vec<(Endpoint, ProtocolMessage)> {
        let mut sent = Vec::new();
        loop {
            match c.next() {
                Action::Send { dst, msg } => sent.push((dst, msg)),
                Action::Note { .. } => {}
                _ => return sent,
            }
            c.on_done(layout);
        }
    }

    fn read_reply(vote: Vote, round: u32) -> ProtocolMessage {
        ProtocolMessage::ReadReply { key: "X2".into(), round, val: Value::Nil, seq_num: 0, vote }
    }

    fn validate_reply(vote: Vote) -> ProtocolMessage {
        ProtocolMessage::ValidateReply { vote, write_seqs: Vec::new() }
    }

    fn kinds(sent: &[(Endpoint, ProtocolMessage)]) -> Vec<MsgKind> {
        sent.iter().map(|(_, m)| m.kind()).collect()
    }

    fn through_reads(c: &mut Coordinator, l: &Layout) -> Vec<(Endpoint, ProtocolMessage)> {
        drain(c, l);
        c.on_receive(0, &read_reply(Vote::Commit, 0), l);
        c.on_receive(1, &read_reply(Vote::Commit, 0), l);
        drain(c, l)
    }

    #[test]
    fn unanimous_commit_votes_commit() {
        let l = layout(VariantTag::Base);
        let mut c = coordinator(&l);
        let validate = through_reads(&mut c, &l);
        assert_eq!(kinds(&validate), vec![MsgKind::Validate; 3]);
        c.on_receive(0, &validate_reply(Vote::Commit), &l);
        c.on_receive(2, &validate_reply(Vote::Commit), &l);
        assert_eq!(kinds(&drain(&mut c, &l)), vec![MsgKind::Commit; 3]);
        assert!(matches!(c.next(), Action::Respond(Some(TxnResult { outcome: Outcome::Commit, .. }))));
    }

    #[test]
    fn one_abort_vote_in_quorum_aborts() {
        let l = layout(VariantTag::Base);
        let mut c = coordinator(&l);
        through_reads(&mut c, &l);
        c.on_receive(0, &validate_reply(Vote::Commit), &l);
        c.on_receive(1, &validate_reply(Vote::Abort), &l);
        assert_eq!(kinds(&drain(&mut c, &l)), vec![MsgKind::Abort; 3]);
        assert!(matches!(c.next(), Action::Respond(Some(TxnResult { outcome: Outcome::Abort, .. }))));
    }

    #[test]
    fn abort_vote_during_reads_aborts_without_broadcast() {
        let l = layout(VariantTag::Base);
        let mut c = coordinator(&l);
        drain(&mut c, &l);
        c.on_receive(0, &read_reply(Vote::Commit, 0), &l);
        c.on_receive(1, &read_reply(Vote::Abort, 0), &l);
        assert!(drain(&mut c, &l).is_empty());
        let Action::Respond(Some(r)) = c.next() else { panic!("expected a response") };
        assert_eq!(r.outcome, Outcome::Abort);
        assert!(r.write_set.is_empty());
    }

    #[test]
    fn stale_round_and_unknown_replies_are_ignored() {
        let l = layout(VariantTag::Base);
        let mut c = coordinator(&l);
        drain(&mut c, &l);
        c.on_receive(0, &read_reply(Vote::Abort, 7), &l);
        c.on_receive(1, &validate_reply(Vote::Abort), &l);
        assert_eq!(c.next(), Action::Await);
        assert_eq!(c.phase(), Phase::Reading);
    }

    #[test]
    fn two_round_variant_locks_then_checks() {
        let l = layout(VariantTag::NoFastDecision);
        let mut c = coordinator(&l);
        assert_eq!(kinds(&through_reads(&mut c, &l)), vec![MsgKind::Lock; 3]);
        for n in [0, 1] {
            c.on_receive(n, &ProtocolMessage::LockReply { vote: Vote::Commit, write_seqs: Vec::new() }, &l);
        }
        assert_eq!(kinds(&drain(&mut c, &l)), vec![MsgKind::Check; 3]);
        c.on_receive(2, &ProtocolMessage::CheckReply { vote: Vote::Abort }, &l);
        c.on_receive(0, &ProtocolMessage::CheckReply { vote: Vote::Commit }, &l);
        assert_eq!(kinds(&drain(&mut c, &l)), vec![MsgKind::Abort; 3]);
    }

    #[test]
    fn committed_writes_get_next_sequence_number() {
        let l = layout(VariantTag::Base);
        let mut c = coordinator(&l);
        through_reads(&mut c, &l);
        let seqs = |s| vec![SeqReport { key: "X1".into(), seq_num: s }];
        c.on_receive(0, &ProtocolMessage::ValidateReply { vote: Vote::Commit, write_seqs: seqs(4) }, &l);
        c.on_receive(1, &ProtocolMessage::ValidateReply { vote: Vote::Commit, write_seqs: seqs(2) }, &l);
        let sent = drain(&mut c, &l);
        let ProtocolMessage::Commit { txn } = &sent[0].1 else { panic!("expected a commit") };
        assert_eq!(txn.writes[0].seq_num, Some(5));
    }
}

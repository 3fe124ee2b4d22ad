use std::collections::BTreeSet;

use super::{Action, Layout, ProtocolMessage, SeqReport, TxnRecord, VariantTag, Vote, READ_RETRY_BOUND};
use crate::memory::{BaseObjectId, Field, PrimOp};
use crate::simkit::Endpoint;
use crate::value::{ItemId, NodeId, TxnId, Value};

/// A node-side message handler.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeMachine {
    Read(ReadMachine),
    Ops(OpsMachine),
}

impl NodeMachine {
    /// Handler for `msg`, received by `node` from client `client`.
    pub fn for_message(layout: &Layout, node: NodeId, client: usize, msg: &ProtocolMessage) -> Option<Self> {
        let reply_to = Endpoint::Client { idx: client };
        let m = match msg {
            ProtocolMessage::Read { key, round } => NodeMachine::Read(ReadMachine::new(layout, node, reply_to, key.clone(), *round)),
            ProtocolMessage::Validate { txn } => ops(txn, reply_to, Some(Reply::Validate), validate_plan(layout, node, txn)),
            ProtocolMessage::Lock { txn } => ops(txn, reply_to, Some(Reply::Lock), lock_plan(layout, node, txn)),
            ProtocolMessage::Check { txn } => ops(txn, reply_to, Some(Reply::Check), check_plan(layout, node, txn)),
            ProtocolMessage::Commit { txn } => ops(txn, reply_to, None, commit_plan(layout, node, txn)),
            ProtocolMessage::Abort { txn } | ProtocolMessage::Restart { txn } => {
                ops(txn, reply_to, None, release_plan(layout, node, txn))
            }
            _ => return None,
        };
        Some(m)
    }

    pub fn next(&self) -> Action {
        match self {
            NodeMachine::Read(m) => m.next(),
            NodeMachine::Ops(m) => m.next(),
        }
    }

    /// Feeds back the result of the last action (`Nil` for non-primitives).
    pub fn advance(&mut self, ret: &Value) {
        match self {
            NodeMachine::Read(m) => m.advance(ret),
            NodeMachine::Ops(m) => m.advance(ret),
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            NodeMachine::Read(m) => m.stage == ReadStage::Done,
            NodeMachine::Ops(m) => m.stage == OpsStage::Done,
        }
    }

    /// The last attempt failed and the next one repeats it.
    pub fn is_spinning(&self) -> bool {
        match self {
            NodeMachine::Read(m) => m.stage == ReadStage::WaitFree && m.failures > 0,
            NodeMachine::Ops(m) => m.spinning,
        }
    }

    pub fn is_read_handler(&self) -> bool {
        matches!(self, NodeMachine::Read(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum ReadStage {
    WaitFree,
    ReadSeq,
    CheckFree,
    ReadVal,
    Recheck,
    Reply,
    Respond,
    Done,
}

/// Lock-free atomic read of an item's (val, seqNum).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReadMachine {
    key: ItemId,
    round: u32,
    reply_to: Endpoint,
    lock_s: BaseObjectId,
    seq_obj: BaseObjectId,
    val_obj: BaseObjectId,
    stage: ReadStage,
    failures: u8,
    seq: i64,
    val: Value,
    vote: Vote,
}

impl ReadMachine {
    fn new(layout: &Layout, node: NodeId, reply_to: Endpoint, key: ItemId, round: u32) -> Self {
        Self {
            lock_s: layout.obj(node, &key, Field::LockS),
            seq_obj: layout.obj(node, &key, Field::SeqNum),
            val_obj: layout.obj(node, &key, Field::Val),
            key,
            round,
            reply_to,
            stage: ReadStage::WaitFree,
            failures: 0,
            seq: 0,
            val: Value::Nil,
            vote: Vote::Commit,
        }
    }

    fn next(&self) -> Action {
        let read = |obj: &BaseObjectId| Action::Prim { obj: obj.clone(), op: PrimOp::Read };
        match self.stage {
            ReadStage::WaitFree | ReadStage::CheckFree => read(&self.lock_s),
            ReadStage::ReadSeq | ReadStage::Recheck => read(&self.seq_obj),
            ReadStage::ReadVal => read(&self.val_obj),
            ReadStage::Reply => Action::Send {
                dst: self.reply_to,
                msg: ProtocolMessage::ReadReply {
                    key: self.key.clone(),
                    round: self.round,
                    val: self.val.clone(),
                    seq_num: self.seq,
                    vote: self.vote,
                },
            },
            ReadStage::Respond => Action::Respond(None),
            ReadStage::Done => Action::Await,
        }
    }

    fn fail(&mut self) {
        self.failures += 1;
        if self.failures >= READ_RETRY_BOUND {
            self.vote = Vote::Abort;
            self.val = Value::Nil;
            self.seq = 0;
            self.stage = ReadStage::Reply;
        } else {
            self.stage = ReadStage::WaitFree;
        }
    }

    fn advance(&mut self, ret: &Value) {
        self.stage = match self.stage {
            ReadStage::WaitFree if ret.is_nil() => ReadStage::ReadSeq,
            ReadStage::WaitFree => return self.fail(),
            ReadStage::ReadSeq => {
                self.seq = ret.as_int().unwrap_or(0);
                ReadStage::CheckFree
            }
            ReadStage::CheckFree if ret.is_nil() => ReadStage::ReadVal,
            ReadStage::CheckFree => return self.fail(),
            ReadStage::ReadVal => {
                self.val = ret.clone();
                ReadStage::Recheck
            }
            ReadStage::Recheck if ret.as_int() == Some(self.seq) => ReadStage::Reply,
            ReadStage::Recheck => return self.fail(),
            ReadStage::Reply => ReadStage::Respond,
            ReadStage::Respond | ReadStage::Done => ReadStage::Done,
        };
    }
}

/// One logical operation of a validation, commit or release handler.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    /// Fails unless the lock is free (or held by this transaction).
    CheckFree { obj: BaseObjectId, allow_own: bool },
    CheckSeq { obj: BaseObjectId, expected: i64 },
    Acquire { obj: BaseObjectId },
    ReportSeq { key: ItemId, obj: BaseObjectId },
    /// Spin on CAS until the short lock is ours.
    LockShort { obj: BaseObjectId },
    Install { seq_obj: BaseObjectId, val_obj: BaseObjectId, seq: i64, val: Value },
    UnlockShort { obj: BaseObjectId },
    ReleaseIfOwn { obj: BaseObjectId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Reply {
    Validate,
    Lock,
    Check,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum OpsStage {
    Exec,
    Rollback,
    Reply,
    Respond,
    Done,
}

/// Interpreter for a straight-line plan of [`Instr`]s.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OpsMachine {
    tid: Value,
    reply_to: Endpoint,
    reply: Option<Reply>,
    plan: Vec<Instr>,
    pc: usize,
    /// Position inside a multi-step instruction.
    sub: u8,
    stage: OpsStage,
    failed: bool,
    spinning: bool,
    acquired: Vec<BaseObjectId>,
    rollback_idx: usize,
    write_seqs: Vec<SeqReport>,
}

fn ops(txn: &TxnRecord, reply_to: Endpoint, reply: Option<Reply>, plan: Vec<Instr>) -> NodeMachine {
    let mut m = OpsMachine {
        tid: Value::text(txn.tid.as_str()),
        reply_to,
        reply,
        plan,
        pc: 0,
        sub: 0,
        stage: OpsStage::Exec,
        failed: false,
        spinning: false,
        acquired: Vec::new(),
        rollback_idx: 0,
        write_seqs: Vec::new(),
    };
    m.settle();
    NodeMachine::Ops(m)
}

impl OpsMachine {
    pub fn plan(&self) -> &[Instr] {
        &self.plan
    }

    fn next(&self) -> Action {
        let prim = |obj: &BaseObjectId, op: PrimOp| Action::Prim { obj: obj.clone(), op };
        match self.stage {
            OpsStage::Exec => match &self.plan[self.pc] {
                Instr::CheckFree { obj, .. } | Instr::CheckSeq { obj, .. } | Instr::ReportSeq { obj, .. } => prim(obj, PrimOp::Read),
                Instr::Acquire { obj } | Instr::LockShort { obj } => {
                    prim(obj, PrimOp::Cas { expected: Value::Nil, new: self.tid.clone() })
                }
                Instr::Install { seq_obj, val_obj, seq, val } => match self.sub {
                    0 => prim(seq_obj, PrimOp::Read),
                    1 => prim(seq_obj, PrimOp::Write(Value::Int(*seq))),
                    _ => prim(val_obj, PrimOp::Write(val.clone())),
                },
                Instr::UnlockShort { obj } => prim(obj, PrimOp::Write(Value::Nil)),
                Instr::ReleaseIfOwn { obj } => match self.sub {
                    0 => prim(obj, PrimOp::Read),
                    _ => prim(obj, PrimOp::Write(Value::Nil)),
                },
            },
            OpsStage::Rollback => prim(&self.acquired[self.rollback_idx], PrimOp::Write(Value::Nil)),
            OpsStage::Reply => {
                let vote = if self.failed { Vote::Abort } else { Vote::Commit };
                let write_seqs = if self.failed { Vec::new() } else { self.write_seqs.clone() };
                let msg = match self.reply.expect("reply stage implies a reply kind") {
                    Reply::Validate => ProtocolMessage::ValidateReply { vote, write_seqs },
                    Reply::Lock => ProtocolMessage::LockReply { vote, write_seqs },
                    Reply::Check => ProtocolMessage::CheckReply { vote },
                };
                Action::Send { dst: self.reply_to, msg }
            }
            OpsStage::Respond => Action::Respond(None),
            OpsStage::Done => Action::Await,
        }
    }

    fn step_pc(&mut self) {
        self.pc += 1;
        self.sub = 0;
    }

    fn advance(&mut self, ret: &Value) {
        match self.stage {
            OpsStage::Exec => self.exec(ret),
            OpsStage::Rollback => self.rollback_idx += 1,
            OpsStage::Reply => self.stage = OpsStage::Respond,
            OpsStage::Respond | OpsStage::Done => self.stage = OpsStage::Done,
        }
        self.settle();
    }

    fn exec(&mut self, ret: &Value) {
        self.spinning = false;
        match self.plan[self.pc].clone() {
            Instr::CheckFree { allow_own, .. } => {
                if ret.is_nil() || (allow_own && *ret == self.tid) {
                    self.step_pc();
                } else {
                    self.failed = true;
                }
            }
            Instr::CheckSeq { expected, .. } => {
                if ret.as_int() == Some(expected) {
                    self.step_pc();
                } else {
                    self.failed = true;
                }
            }
            Instr::Acquire { obj } => {
                if *ret == Value::Int(1) {
                    self.acquired.push(obj);
                    self.step_pc();
                } else {
                    self.failed = true;
                }
            }
            Instr::ReportSeq { key, .. } => {
                self.write_seqs.push(SeqReport { key, seq_num: ret.as_int().unwrap_or(0) });
                self.step_pc();
            }
            Instr::LockShort { .. } => {
                if *ret == Value::Int(1) {
                    self.step_pc();
                } else {
                    self.spinning = true;
                }
            }
            Instr::Install { seq, .. } => match self.sub {
                0 if ret.as_int().unwrap_or(0) < seq => self.sub = 1,
                0 => self.step_pc(),
                1 => self.sub = 2,
                _ => self.step_pc(),
            },
            Instr::UnlockShort { .. } => self.step_pc(),
            Instr::ReleaseIfOwn { .. } => match self.sub {
                0 if *ret == self.tid => self.sub = 1,
                _ => self.step_pc(),
            },
        }
    }

    /// Moves past finished stages so that `next` always has work.
    fn settle(&mut self) {
        if self.stage == OpsStage::Exec && (self.failed || self.pc >= self.plan.len()) {
            self.stage = OpsStage::Rollback;
        }
        if self.stage == OpsStage::Rollback && (!self.failed || self.rollback_idx >= self.acquired.len()) {
            self.stage = if self.reply.is_some() { OpsStage::Reply } else { OpsStage::Respond };
        }
    }
}

fn item_set(txn: &TxnRecord) -> BTreeSet<ItemId> {
    txn.reads.iter().map(|r| r.key.clone()).chain(txn.writes.iter().map(|w| w.key.clone())).collect()
}

fn local_items(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<ItemId> {
    item_set(txn).into_iter().filter(|i| layout.stores(node, i)).collect()
}

fn write_keys(txn: &TxnRecord) -> Vec<ItemId> {
    let set: BTreeSet<ItemId> = txn.writes.iter().map(|w| w.key.clone()).collect();
    set.into_iter().collect()
}

fn read_keys(txn: &TxnRecord) -> Vec<ItemId> {
    let set: BTreeSet<ItemId> = txn.reads.iter().map(|r| r.key.clone()).collect();
    set.into_iter().collect()
}

fn lock_l(layout: &Layout, node: NodeId, item: &ItemId) -> BaseObjectId {
    layout.obj(node, item, Field::LockL)
}

fn check_seq(layout: &Layout, node: NodeId, txn: &TxnRecord, item: &ItemId) -> Option<Instr> {
    txn.reads_key(item).map(|expected| Instr::CheckSeq { obj: layout.obj(node, item, Field::SeqNum), expected })
}

fn report_seq(layout: &Layout, node: NodeId, item: &ItemId) -> Instr {
    Instr::ReportSeq { key: item.clone(), obj: layout.obj(node, item, Field::SeqNum) }
}

fn validate_plan(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let mut plan = Vec::new();
    let writer = !txn.is_read_only();
    match layout.tag() {
        VariantTag::WeakIrOnly if writer => {
            for item in local_items(layout, node, txn) {
                plan.push(Instr::Acquire { obj: lock_l(layout, node, &item) });
                plan.extend(check_seq(layout, node, txn, &item));
                if txn.writes_key(&item) {
                    plan.push(report_seq(layout, node, &item));
                }
            }
        }
        VariantTag::NoSeamlessFt => {
            // Locks first, then read checks, as a single round of the
            // two-round scheme.
            plan.extend(lock_plan(layout, node, txn));
            plan.extend(check_plan(layout, node, txn));
        }
        VariantTag::NoDdap => {
            let global = layout.global_lock(node);
            if writer {
                plan.push(Instr::Acquire { obj: global });
            } else {
                plan.push(Instr::CheckFree { obj: global, allow_own: false });
            }
            for item in local_items(layout, node, txn) {
                plan.extend(check_seq(layout, node, txn, &item));
                if txn.writes_key(&item) {
                    plan.push(report_seq(layout, node, &item));
                }
            }
        }
        _ => {
            for item in local_items(layout, node, txn) {
                plan.push(Instr::CheckFree { obj: lock_l(layout, node, &item), allow_own: false });
                plan.extend(check_seq(layout, node, txn, &item));
                if txn.writes_key(&item) {
                    plan.push(Instr::Acquire { obj: lock_l(layout, node, &item) });
                    plan.push(report_seq(layout, node, &item));
                }
            }
        }
    }
    plan
}

/// Items whose lockL this node orders: stored ones, plus shadow locks of
/// every item under the no-seamless variant.
fn lockable(layout: &Layout, node: NodeId, item: &ItemId) -> bool {
    layout.tag() == VariantTag::NoSeamlessFt || layout.stores(node, item)
}

fn lock_plan(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let mut plan = Vec::new();
    for item in write_keys(txn) {
        if lockable(layout, node, &item) {
            plan.push(Instr::Acquire { obj: lock_l(layout, node, &item) });
        }
        if layout.stores(node, &item) {
            plan.push(report_seq(layout, node, &item));
        }
    }
    plan
}

fn check_plan(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let mut plan = Vec::new();
    for item in read_keys(txn) {
        if lockable(layout, node, &item) {
            plan.push(Instr::CheckFree { obj: lock_l(layout, node, &item), allow_own: true });
        }
        if layout.stores(node, &item) {
            plan.extend(check_seq(layout, node, txn, &item));
        }
    }
    plan
}

fn commit_plan(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let mut plan = Vec::new();
    let per_item_locks = layout.tag() != VariantTag::NoDdap;
    for w in &txn.writes {
        if !layout.stores(node, &w.key) {
            continue;
        }
        let lock_s = layout.obj(node, &w.key, Field::LockS);
        plan.push(Instr::LockShort { obj: lock_s.clone() });
        plan.push(Instr::Install {
            seq_obj: layout.obj(node, &w.key, Field::SeqNum),
            val_obj: layout.obj(node, &w.key, Field::Val),
            seq: w.seq_num.unwrap_or(0),
            val: w.new_val.clone(),
        });
        plan.push(Instr::UnlockShort { obj: lock_s });
        if per_item_locks {
            plan.push(Instr::ReleaseIfOwn { obj: lock_l(layout, node, &w.key) });
        }
    }
    plan.extend(extra_releases(layout, node, txn));
    plan
}

/// Lock releases beyond the per-write-item ones done by the commit loop.
fn extra_releases(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let writer = !txn.is_read_only();
    match layout.tag() {
        VariantTag::WeakIrOnly if writer => local_items(layout, node, txn)
            .into_iter()
            .filter(|i| !txn.writes_key(i))
            .map(|i| Instr::ReleaseIfOwn { obj: lock_l(layout, node, &i) })
            .collect(),
        VariantTag::NoSeamlessFt => write_keys(txn)
            .into_iter()
            .filter(|i| !layout.stores(node, i))
            .map(|i| Instr::ReleaseIfOwn { obj: lock_l(layout, node, &i) })
            .collect(),
        VariantTag::NoDdap if writer => vec![Instr::ReleaseIfOwn { obj: layout.global_lock(node) }],
        _ => Vec::new(),
    }
}

fn release_plan(layout: &Layout, node: NodeId, txn: &TxnRecord) -> Vec<Instr> {
    let mut plan: Vec<Instr> = Vec::new();
    if layout.tag() != VariantTag::NoDdap {
        for item in write_keys(txn) {
            if layout.stores(node, &item) {
                plan.push(Instr::ReleaseIfOwn { obj: lock_l(layout, node, &item) });
            }
        }
    }
    plan.extend(extra_releases(layout, node, txn));
    plan
}

/// Transaction id as stored in lock registers.
pub fn lock_value(tid: &TxnId) -> Value {
    Value::text(tid.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Memory;
    use crate::protocols::{AlgorithmVariant, ReadEntry, WriteEntry};
    use crate::txmodel::{ItemDecl, Scenario};

    fn layout(tag: VariantTag) -> Layout {
        let s = Scenario {
            name: "n".into(),
            nodes: Some(2),
            items: vec![ItemDecl { id: "X1".into(), initial: Value::Nil }, ItemDecl { id: "X2".into(), initial: Value::Nil }],
            placement: [("X1".into(), vec![0]), ("X2".into(), vec![1])].into_iter().collect(),
            k: 1,
            f: 0,
            transactions: vec![],
        };
        Layout::new(&s, AlgorithmVariant::new(tag), 2, 16)
    }

    fn memory(l: &Layout) -> Memory {
        let mut m = Memory::new();
        for (o, v) in l.objects() {
            m.declare(o, v);
        }
        m
    }

    /// Runs a node handler to completion, returning its sends and the
    /// number of non-trivial primitives it issued.
    fn drive(mut h: NodeMachine, node: NodeId, mem: &mut Memory) -> (Vec<ProtocolMessage>, usize) {
        let (mut sent, mut nontrivial) = (Vec::new(), 0);
        for _ in 0..200 {
            match h.next() {
                Action::Prim { obj, op } => {
                    nontrivial += usize::from(op.kind().is_nontrivial());
                    let acc = mem.apply(node, &obj, &op).unwrap();
                    h.advance(&acc.ret);
                }
                Action::Send { msg, .. } => {
                    sent.push(msg);
                    h.advance(&Value::Nil);
                }
                Action::Respond(_) => {
                    h.advance(&Value::Nil);
                    return (sent, nontrivial);
                }
                a => panic!("unexpected {a:?}"),
            }
        }
        panic!("handler did not finish");
    }

    fn txn(reads: &[(&str, i64)], writes: &[&str]) -> TxnRecord {
        TxnRecord {
            tid: "T1".into(),
            reads: reads.iter().map(|(k, s)| ReadEntry { key: (*k).into(), seq_num: *s }).collect(),
            writes: writes.iter().map(|k| WriteEntry { key: (*k).into(), new_val: Value::Int(7), seq_num: Some(1) }).collect(),
        }
    }

    #[test]
    fn quiescent_read_returns_initial_pair() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Read { key: "X1".into(), round: 0 }).unwrap();
        let (sent, nontrivial) = drive(h, 0, &mut mem);
        assert_eq!(nontrivial, 0);
        assert_eq!(
            sent,
            vec![ProtocolMessage::ReadReply { key: "X1".into(), round: 0, val: Value::Nil, seq_num: 0, vote: Vote::Commit }]
        );
    }

    #[test]
    fn read_votes_abort_after_retry_bound() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let lock_s = l.obj(0, &"X1".into(), Field::LockS);
        mem.write(0, &lock_s, Value::text("T9")).unwrap();
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Read { key: "X1".into(), round: 0 }).unwrap();
        let (sent, _) = drive(h, 0, &mut mem);
        assert!(matches!(sent[0], ProtocolMessage::ReadReply { vote: Vote::Abort, .. }));
    }

    #[test]
    fn validate_locks_writes_and_reports_seq() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let t = txn(&[], &["X2"]);
        let h = NodeMachine::for_message(&l, 1, 0, &ProtocolMessage::Validate { txn: t }).unwrap();
        let (sent, _) = drive(h, 1, &mut mem);
        assert_eq!(
            sent,
            vec![ProtocolMessage::ValidateReply { vote: Vote::Commit, write_seqs: vec![SeqReport { key: "X2".into(), seq_num: 0 }] }]
        );
        assert_eq!(mem.get(&l.obj(1, &"X2".into(), Field::LockL)), Some(&Value::text("T1")));
    }

    #[test]
    fn validate_aborts_on_held_read_lock_and_rolls_back() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        mem.write(0, &l.obj(0, &"X1".into(), Field::LockL), Value::text("T9")).unwrap();
        let t = TxnRecord { tid: "T1".into(), reads: vec![ReadEntry { key: "X1".into(), seq_num: 0 }], writes: vec![] };
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Validate { txn: t }).unwrap();
        let (sent, _) = drive(h, 0, &mut mem);
        assert!(matches!(sent[0], ProtocolMessage::ValidateReply { vote: Vote::Abort, .. }));
    }

    #[test]
    fn stale_seq_aborts() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        mem.write(0, &l.obj(0, &"X1".into(), Field::SeqNum), Value::Int(3)).unwrap();
        let t = txn(&[("X1", 0)], &[]);
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Validate { txn: t }).unwrap();
        let (sent, _) = drive(h, 0, &mut mem);
        assert!(matches!(sent[0], ProtocolMessage::ValidateReply { vote: Vote::Abort, .. }));
    }

    #[test]
    fn commit_installs_newer_and_releases() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let t = txn(&[], &["X1"]);
        let lock = l.obj(0, &"X1".into(), Field::LockL);
        mem.write(0, &lock, Value::text("T1")).unwrap();
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Commit { txn: t }).unwrap();
        drive(h, 0, &mut mem);
        assert_eq!(mem.get(&l.obj(0, &"X1".into(), Field::Val)), Some(&Value::Int(7)));
        assert_eq!(mem.get(&l.obj(0, &"X1".into(), Field::SeqNum)), Some(&Value::Int(1)));
        assert_eq!(mem.get(&lock), Some(&Value::Nil));
    }

    #[test]
    fn stale_commit_skips_install_but_releases() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let lock = l.obj(0, &"X1".into(), Field::LockL);
        mem.write(0, &lock, Value::text("T1")).unwrap();
        mem.write(0, &l.obj(0, &"X1".into(), Field::SeqNum), Value::Int(5)).unwrap();
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Commit { txn: txn(&[], &["X1"]) }).unwrap();
        drive(h, 0, &mut mem);
        assert_eq!(mem.get(&l.obj(0, &"X1".into(), Field::Val)), Some(&Value::Nil));
        assert_eq!(mem.get(&lock), Some(&Value::Nil));
    }

    #[test]
    fn abort_releases_own_lock_only() {
        let l = layout(VariantTag::Base);
        let mut mem = memory(&l);
        let lock = l.obj(0, &"X1".into(), Field::LockL);
        mem.write(0, &lock, Value::text("T2")).unwrap();
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Abort { txn: txn(&[], &["X1"]) }).unwrap();
        drive(h, 0, &mut mem);
        assert_eq!(mem.get(&lock), Some(&Value::text("T2")));
    }

    #[test]
    fn weak_ir_locks_read_items_of_writers_only() {
        let l = layout(VariantTag::WeakIrOnly);
        let mut mem = memory(&l);
        let writer = txn(&[("X1", 0)], &["X1"]);
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Validate { txn: writer }).unwrap();
        let (_, nontrivial) = drive(h, 0, &mut mem);
        assert_eq!(nontrivial, 1);
        let mut mem = memory(&l);
        let reader = txn(&[("X1", 0)], &[]);
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Validate { txn: reader }).unwrap();
        assert_eq!(drive(h, 0, &mut mem).1, 0);
    }

    #[test]
    fn no_ddap_writer_takes_global_lock_everywhere() {
        let l = layout(VariantTag::NoDdap);
        let mut mem = memory(&l);
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Validate { txn: txn(&[], &["X2"]) }).unwrap();
        let (sent, nontrivial) = drive(h, 0, &mut mem);
        assert_eq!(nontrivial, 1);
        assert!(matches!(sent[0], ProtocolMessage::ValidateReply { vote: Vote::Commit, .. }));
        assert_eq!(mem.get(&l.global_lock(0)), Some(&Value::text("T1")));
    }

    #[test]
    fn restart_releases_shadow_locks() {
        let l = layout(VariantTag::NoSeamlessFt);
        let mut mem = memory(&l);
        let shadow = l.obj(0, &"X2".into(), Field::LockL);
        mem.write(0, &shadow, Value::text("T1")).unwrap();
        let h = NodeMachine::for_message(&l, 0, 0, &ProtocolMessage::Restart { txn: txn(&[], &["X2"]) }).unwrap();
        drive(h, 0, &mut mem);
        assert_eq!(mem.get(&shadow), Some(&Value::Nil));
    }
}

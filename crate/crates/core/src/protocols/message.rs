use serde::{Deserialize, Serialize};

use crate::value::{ItemId, TxnId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgKind {
    Read,
    ReadReply,
    Validate,
    ValidateReply,
    Commit,
    Abort,
    Lock,
    LockReply,
    Check,
    CheckReply,
    Restart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Vote {
    Commit,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReadEntry {
    pub key: ItemId,
    pub seq_num: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WriteEntry {
    pub key: ItemId,
    pub new_val: Value,
    /// Assigned by the coordinator once it decides to commit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_num: Option<i64>,
}

/// The transaction message `T`: reads as (key, seqNum), writes as (key, newVal).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxnRecord {
    pub tid: TxnId,
    pub reads: Vec<ReadEntry>,
    pub writes: Vec<WriteEntry>,
}

impl TxnRecord {
    pub fn is_read_only(&self) -> bool {
        self.writes.is_empty()
    }

    pub fn reads_key(&self, key: &ItemId) -> Option<i64> {
        self.reads.iter().find(|r| &r.key == key).map(|r| r.seq_num)
    }

    pub fn writes_key(&self, key: &ItemId) -> bool {
        self.writes.iter().any(|w| &w.key == key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeqReport {
    pub key: ItemId,
    pub seq_num: i64,
}

/// Messages exchanged between coordinators and node processes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all_fields = "camelCase")]
pub enum ProtocolMessage {
    /// `round` distinguishes a re-executed read phase from the first one.
    Read { key: ItemId, round: u32 },
    ReadReply { key: ItemId, round: u32, val: Value, seq_num: i64, vote: Vote },
    Validate { txn: TxnRecord },
    ValidateReply { vote: Vote, write_seqs: Vec<SeqReport> },
    Commit { txn: TxnRecord },
    Abort { txn: TxnRecord },
    Lock { txn: TxnRecord },
    LockReply { vote: Vote, write_seqs: Vec<SeqReport> },
    Check { txn: TxnRecord },
    CheckReply { vote: Vote },
    Restart { txn: TxnRecord },
}

impl ProtocolMessage {
    pub fn kind(&self) -> MsgKind {
        match self {
            ProtocolMessage::Read { .. } => MsgKind::Read,
            ProtocolMessage::ReadReply { .. } => MsgKind::ReadReply,
            ProtocolMessage::Validate { .. } => MsgKind::Validate,
            ProtocolMessage::ValidateReply { .. } => MsgKind::ValidateReply,
            ProtocolMessage::Commit { .. } => MsgKind::Commit,
            ProtocolMessage::Abort { .. } => MsgKind::Abort,
            ProtocolMessage::Lock { .. } => MsgKind::Lock,
            ProtocolMessage::LockReply { .. } => MsgKind::LockReply,
            ProtocolMessage::Check { .. } => MsgKind::Check,
            ProtocolMessage::CheckReply { .. } => MsgKind::CheckReply,
            ProtocolMessage::Restart { .. } => MsgKind::Restart,
        }
    }
}

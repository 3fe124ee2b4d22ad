use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::memory::BaseObjectId;
use crate::simkit::Schedule;
use crate::value::{ItemId, NodeId, TxnId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyTag {
    Serializability,
    WeakProgress,
    WeakIR,
    StrongIR,
    DAP,
    DDAP,
    FastDecision,
    SeamlessFT,
    ReadDelay,
}

impl PropertyTag {
    pub const ALL: [PropertyTag; 9] = [
        PropertyTag::Serializability,
        PropertyTag::WeakProgress,
        PropertyTag::WeakIR,
        PropertyTag::StrongIR,
        PropertyTag::DAP,
        PropertyTag::DDAP,
        PropertyTag::FastDecision,
        PropertyTag::SeamlessFT,
        PropertyTag::ReadDelay,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            PropertyTag::Serializability => "serializability",
            PropertyTag::WeakProgress => "weak-progress",
            PropertyTag::WeakIR => "weak-ir",
            PropertyTag::StrongIR => "strong-ir",
            PropertyTag::DAP => "dap",
            PropertyTag::DDAP => "ddap",
            PropertyTag::FastDecision => "fast-decision",
            PropertyTag::SeamlessFT => "seamless-ft",
            PropertyTag::ReadDelay => "read-delay",
        }
    }
}

impl fmt::Display for PropertyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PropertyTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyTag::ALL
            .into_iter()
            .find(|p| p.cli_name() == s)
            .ok_or_else(|| format!("unknown property {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DepKind {
    /// `to` read the value `from` wrote.
    ReadFrom,
    /// `from` read a value that `to` overwrote.
    AntiDependency,
    /// `from`'s write precedes `to`'s write of the same item.
    WriteOrder,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DepEdge {
    pub from: TxnId,
    pub to: TxnId,
    pub kind: DepKind,
    pub item: ItemId,
}

/// One non-trivial primitive in a strong-invisible-reads comparison.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FootprintEntry {
    pub obj: BaseObjectId,
    pub op: String,
    pub args: Vec<Value>,
    pub ret: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum Witness {
    SerialOrder { order: Vec<TxnId> },
    Cycle { edges: Vec<DepEdge> },
    /// A read whose value no transaction (nor the initial state) wrote.
    UnexplainedRead { txn: TxnId, item: ItemId, value: Value },
    Undecided { txns: Vec<TxnId> },
    NotCommitted { txn: TxnId, trace: usize },
    Steps { txn: TxnId, steps: Vec<usize> },
    Contention { a: usize, b: usize, obj: BaseObjectId, txns: (TxnId, TxnId) },
    Depth { txn: TxnId, depth: u32, bound: u32 },
    /// A prefix after which no value is learned within two more delays.
    StalledPrefix { txn: TxnId, prefix_len: usize, partial_depth: u32, learned_before: usize },
    LearnedTooEarly { txn: TxnId, item: ItemId, step: usize, partial_depth: u32 },
    Footprint { txn: TxnId, only_original: Vec<FootprintEntry>, only_twin: Vec<FootprintEntry>, other: Option<TxnId> },
    CrashInjection { node: NodeId, position: usize, schedule: Schedule, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: PropertyTag,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub details: String,
}

impl Verdict {
    pub fn pass(property: PropertyTag, details: impl Into<String>) -> Self {
        Self { property, pass: true, witness: None, details: details.into() }
    }

    pub fn pass_with(property: PropertyTag, witness: Witness, details: impl Into<String>) -> Self {
        Self { property, pass: true, witness: Some(witness), details: details.into() }
    }

    pub fn fail(property: PropertyTag, witness: Witness, details: impl Into<String>) -> Self {
        Self { property, pass: false, witness: Some(witness), details: details.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

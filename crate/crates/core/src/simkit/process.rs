use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocols::MsgKind;
use crate::value::{NodeId, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProcKind {
    Client,
    NodeProcess,
}

/// A client process or one of the `P` processes of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcessRef {
    pub kind: ProcKind,
    pub node: Option<NodeId>,
    pub idx: usize,
}

impl ProcessRef {
    pub fn client(idx: usize) -> Self {
        Self { kind: ProcKind::Client, node: None, idx }
    }

    pub fn node_proc(node: NodeId, idx: usize) -> Self {
        Self { kind: ProcKind::NodeProcess, node: Some(node), idx }
    }

    pub fn is_client(&self) -> bool {
        self.kind == ProcKind::Client
    }

    pub fn endpoint(&self) -> Endpoint {
        match self.node {
            Some(node) => Endpoint::Node { node },
            None => Endpoint::Client { idx: self.idx },
        }
    }
}

impl fmt::Display for ProcessRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(node) => write!(f, "N{node}.p{}", self.idx),
            None => write!(f, "C{}", self.idx),
        }
    }
}

/// Message address. Messages go to a client or to a node; which process of
/// the node runs the handler is decided at delivery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Endpoint {
    Client { idx: usize },
    Node { node: NodeId },
}

impl Endpoint {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            Endpoint::Node { node } => Some(*node),
            Endpoint::Client { .. } => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node { node } => write!(f, "N{node}"),
            Endpoint::Client { idx } => write!(f, "C{idx}"),
        }
    }
}

/// Replay-stable message name: the `seq`-th message of `kind` for `txn`
/// sent from `src` to `dst`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgKey {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub txn: TxnId,
    pub kind: MsgKind,
    pub seq: u32,
}

impl fmt::Display for MsgKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}#{}[{}:{}->{}]", self.kind, self.seq, self.txn, self.src, self.dst)
    }
}

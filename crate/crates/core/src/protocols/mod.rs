//! The base algorithm and its four variants as resumable state machines.
//!
//! A machine never touches memory or the network itself. The engine asks it
//! for its next [`Action`], executes that action as one trace step, and feeds
//! the result back.

use std::collections::{BTreeMap, BTreeSet};

use crate::memory::{object_name, BaseObjectId, Field, GLOBAL_LOCK};
use crate::simkit::Endpoint;
use crate::txmodel::{Scenario, TxnResult};
use crate::value::{ItemId, NodeId, Value};

pub mod client;
pub mod message;
pub mod node;
pub mod variant;

pub use client::Coordinator;
pub use message::{MsgKind, ProtocolMessage, ReadEntry, SeqReport, TxnRecord, Vote, WriteEntry};
pub use node::NodeMachine;
pub use variant::{AlgorithmVariant, VariantTag};

/// Maximum failed lock-free read checks before a node votes abort.
pub const READ_RETRY_BOUND: u8 = 8;

/// The next step a handler wants to take.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Prim { obj: BaseObjectId, op: crate::memory::PrimOp },
    Send { dst: Endpoint, msg: ProtocolMessage },
    Note { tag: &'static str, data: serde_json::Value },
    /// Final step. Coordinators carry the transaction result.
    Respond(Option<TxnResult>),
    /// Blocked until a message arrives (coordinators only).
    Await,
}

impl Action {
    /// Steps whose only effect is local to the acting handler or adds a
    /// message to the network.
    pub fn is_invisible(&self) -> bool {
        matches!(self, Action::Send { .. } | Action::Note { .. } | Action::Respond(_))
    }

    pub fn is_trivial_prim(&self) -> bool {
        matches!(self, Action::Prim { op, .. } if !op.kind().is_nontrivial())
    }
}

/// Static protocol view of a scenario: who stores what and which base
/// objects exist under the chosen variant.
#[derive(Clone, Debug)]
pub struct Layout {
    pub variant: AlgorithmVariant,
    pub n_nodes: usize,
    pub k: usize,
    pub f: usize,
    pub groups: BTreeMap<ItemId, Vec<NodeId>>,
    pub initial: BTreeMap<ItemId, Value>,
    pub timeout: u64,
}

impl Layout {
    pub fn new(scenario: &Scenario, variant: AlgorithmVariant, n_nodes: usize, delta: u64) -> Self {
        let groups = scenario
            .placement
            .iter()
            .map(|(item, nodes)| {
                let mut nodes = nodes.clone();
                nodes.sort_unstable();
                (item.clone(), nodes)
            })
            .collect();
        Self {
            variant,
            n_nodes,
            k: scenario.k,
            f: scenario.f,
            groups,
            initial: scenario.items.iter().map(|d| (d.id.clone(), d.initial.clone())).collect(),
            timeout: variant.timeout(delta),
        }
    }

    pub fn tag(&self) -> VariantTag {
        self.variant.tag
    }

    pub fn quorum(&self) -> usize {
        self.k.saturating_sub(self.f).max(1)
    }

    pub fn group(&self, item: &ItemId) -> &[NodeId] {
        self.groups.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn stores(&self, node: NodeId, item: &ItemId) -> bool {
        self.group(item).contains(&node)
    }

    pub fn initial(&self, item: &ItemId) -> Value {
        self.initial.get(item).cloned().unwrap_or_default()
    }

    pub fn obj(&self, node: NodeId, item: &ItemId, field: Field) -> BaseObjectId {
        BaseObjectId::new(node, object_name(item, field))
    }

    pub fn global_lock(&self, node: NodeId) -> BaseObjectId {
        BaseObjectId::new(node, GLOBAL_LOCK)
    }

    /// Union of the replica groups of `items`.
    pub fn nodes_of<'a>(&self, items: impl IntoIterator<Item = &'a ItemId>) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = items.into_iter().flat_map(|i| self.group(i).iter().copied()).collect();
        set.into_iter().collect()
    }

    pub fn all_nodes(&self) -> Vec<NodeId> {
        (0..self.n_nodes).collect()
    }

    /// Every base object with its initial value.
    pub fn objects(&self) -> Vec<(BaseObjectId, Value)> {
        let mut out = Vec::new();
        for node in 0..self.n_nodes {
            for (item, group) in &self.groups {
                let init = self.initial(item);
                if group.contains(&node) {
                    for field in [Field::Val, Field::SeqNum, Field::LockS] {
                        out.push((self.obj(node, item, field), field.initial(&init)));
                    }
                    if self.tag() != VariantTag::NoDdap {
                        out.push((self.obj(node, item, Field::LockL), Value::Nil));
                    }
                } else if self.tag() == VariantTag::NoSeamlessFt {
                    // Shadow lock: every node orders every writer.
                    out.push((self.obj(node, item, Field::LockL), Value::Nil));
                }
            }
            if self.tag() == VariantTag::NoDdap {
                out.push((self.global_lock(node), Value::Nil));
            }
        }
        out
    }
}

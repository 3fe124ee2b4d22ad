use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{ItemId, NodeId, TxnId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WriteCondition {
    Always,
    /// Write only if every read returned its item's initial value.
    AllReadsInitial,
    Never,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WriteRule {
    pub target: ItemId,
    pub condition: WriteCondition,
    pub value: Value,
}

/// A transaction: an ordered read set followed by conditional writes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionProgram {
    pub txn_id: TxnId,
    pub client: usize,
    pub read_set: Vec<ItemId>,
    #[serde(default)]
    pub write_rule: Vec<WriteRule>,
}

impl TransactionProgram {
    /// Static data set: read set plus every potential write target.
    pub fn data_set(&self) -> BTreeSet<ItemId> {
        self.read_set
            .iter()
            .cloned()
            .chain(self.write_rule.iter().map(|w| w.target.clone()))
            .collect()
    }

    /// Writes this program performs given the values its reads returned.
    pub fn realized_writes(&self, reads: &[(ItemId, Value)], initial: impl Fn(&ItemId) -> Value) -> Vec<(ItemId, Value)> {
        let all_initial = reads.iter().all(|(item, v)| *v == initial(item));
        self.write_rule
            .iter()
            .filter(|w| match w.condition {
                WriteCondition::Always => true,
                WriteCondition::AllReadsInitial => all_initial,
                WriteCondition::Never => false,
            })
            .map(|w| (w.target.clone(), w.value.clone()))
            .collect()
    }

    /// Twin used by the invisible-reads check: same writes, no reads.
    pub fn write_only_twin(&self, writes: &[(ItemId, Value)]) -> Self {
        Self {
            txn_id: self.txn_id.clone(),
            client: self.client,
            read_set: Vec::new(),
            write_rule: writes
                .iter()
                .map(|(target, value)| WriteRule { target: target.clone(), condition: WriteCondition::Always, value: value.clone() })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemDecl {
    pub id: ItemId,
    #[serde(default)]
    pub initial: Value,
}

/// Which nodes replicate which items, plus the replication and fault budget.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataPlacement {
    pub items: Vec<ItemDecl>,
    pub replica_groups: BTreeMap<ItemId, Vec<NodeId>>,
    pub k: usize,
    pub f: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("item {0} has no replica group")]
    MissingGroup(ItemId),
    #[error("item {item} is replicated on {got} nodes, expected k = {k}")]
    WrongGroupSize { item: ItemId, got: usize, k: usize },
    #[error("item {item} is mapped to unknown node {node}")]
    UnknownNode { item: ItemId, node: NodeId },
    #[error("f = {f} does not satisfy f < k/2 with k = {k}")]
    QuorumIntersection { f: usize, k: usize },
    #[error("transaction {txn} references unknown item {item}")]
    UnknownItem { txn: TxnId, item: ItemId },
    #[error("transaction {txn} writes the initial value of {item} under a conditional rule")]
    InitialConditionalWrite { txn: TxnId, item: ItemId },
    #[error("duplicate transaction id {0}")]
    DuplicateTxn(TxnId),
    #[error("duplicate item id {0}")]
    DuplicateItem(ItemId),
    #[error("unknown transaction {0}")]
    UnknownTxn(TxnId),
    #[error("k must be at least 1")]
    ZeroReplication,
}

/// A complete workload: placement, transactions and the crash budget `f`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Number of nodes; defaults to one past the largest node referenced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub items: Vec<ItemDecl>,
    pub placement: BTreeMap<ItemId, Vec<NodeId>>,
    pub k: usize,
    pub f: usize,
    pub transactions: Vec<TransactionProgram>,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn placement(&self) -> DataPlacement {
        DataPlacement {
            items: self.items.clone(),
            replica_groups: self.placement.clone(),
            k: self.k,
            f: self.f,
        }
    }

    pub fn crash_budget(&self) -> usize {
        self.f
    }

    pub fn n_nodes(&self) -> usize {
        let referenced = self.placement.values().flatten().map(|n| n + 1).max().unwrap_or(1);
        self.nodes.unwrap_or(referenced).max(1)
    }

    pub fn n_clients(&self) -> usize {
        self.transactions.iter().map(|t| t.client + 1).max().unwrap_or(0)
    }

    pub fn group(&self, item: &ItemId) -> &[NodeId] {
        self.placement.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn initial(&self, item: &ItemId) -> Value {
        self.items.iter().find(|d| &d.id == item).map(|d| d.initial.clone()).unwrap_or_default()
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        let mut ids: Vec<_> = self.items.iter().map(|d| d.id.clone()).collect();
        ids.sort();
        ids
    }

    /// Items whose replica group includes `node` (Σ_i), sorted.
    pub fn stored_items(&self, node: NodeId) -> BTreeSet<ItemId> {
        self.placement
            .iter()
            .filter(|(_, nodes)| nodes.contains(&node))
            .map(|(item, _)| item.clone())
            .collect()
    }

    /// Every item lives on every node.
    pub fn is_unsharded(&self) -> bool {
        let n = self.n_nodes();
        self.placement.values().all(|g| g.len() == n)
    }

    pub fn program(&self, txn: &TxnId) -> Option<&TransactionProgram> {
        self.transactions.iter().find(|t| &t.txn_id == txn)
    }

    pub fn txn_index(&self, txn: &TxnId) -> Option<usize> {
        self.transactions.iter().position(|t| &t.txn_id == txn)
    }

    /// Copy of this scenario keeping only the named transactions.
    pub fn restricted_to(&self, keep: &[TxnId]) -> Result<Self, ScenarioError> {
        for t in keep {
            if self.program(t).is_none() {
                return Err(ScenarioError::UnknownTxn(t.clone()));
            }
        }
        let mut s = self.clone();
        s.transactions.retain(|t| keep.contains(&t.txn_id));
        s.nodes = Some(self.n_nodes());
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.k == 0 {
            return Err(ScenarioError::ZeroReplication);
        }
        let n = self.n_nodes();
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert(item.id.clone()) {
                return Err(ScenarioError::DuplicateItem(item.id.clone()));
            }
            let group = self.placement.get(&item.id).ok_or_else(|| ScenarioError::MissingGroup(item.id.clone()))?;
            let distinct: BTreeSet<_> = group.iter().collect();
            if distinct.len() != self.k || group.len() != self.k {
                return Err(ScenarioError::WrongGroupSize { item: item.id.clone(), got: distinct.len(), k: self.k });
            }
            if let Some(&node) = group.iter().find(|&&node| node >= n) {
                return Err(ScenarioError::UnknownNode { item: item.id.clone(), node });
            }
        }
        for item in self.placement.keys() {
            if !seen.contains(item) {
                return Err(ScenarioError::MissingGroup(item.clone()));
            }
        }
        if 2 * self.f >= self.k && self.f > 0 {
            return Err(ScenarioError::QuorumIntersection { f: self.f, k: self.k });
        }
        let mut txns = BTreeSet::new();
        for t in &self.transactions {
            if !txns.insert(t.txn_id.clone()) {
                return Err(ScenarioError::DuplicateTxn(t.txn_id.clone()));
            }
            for item in t.data_set() {
                if !seen.contains(&item) {
                    return Err(ScenarioError::UnknownItem { txn: t.txn_id.clone(), item });
                }
            }
            for w in &t.write_rule {
                if w.condition == WriteCondition::AllReadsInitial && w.value == self.initial(&w.target) {
                    return Err(ScenarioError::InitialConditionalWrite { txn: t.txn_id.clone(), item: w.target.clone() });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_item() -> Scenario {
        Scenario {
            name: "t".into(),
            nodes: None,
            items: vec![
                ItemDecl { id: "X1".into(), initial: Value::Nil },
                ItemDecl { id: "X2".into(), initial: Value::Nil },
            ],
            placement: [("X1".into(), vec![0]), ("X2".into(), vec![1])].into_iter().collect(),
            k: 1,
            f: 0,
            transactions: vec![TransactionProgram {
                txn_id: "T1".into(),
                client: 0,
                read_set: vec!["X1".into()],
                write_rule: vec![WriteRule {
                    target: "X2".into(),
                    condition: WriteCondition::AllReadsInitial,
                    value: Value::Int(2),
                }],
            }],
        }
    }

    #[test]
    fn valid_scenario_passes() {
        let s = two_item();
        s.validate().unwrap();
        assert_eq!(s.n_nodes(), 2);
        assert_eq!(s.n_clients(), 1);
        assert!(!s.is_unsharded());
    }

    #[test]
    fn unknown_node_is_rejected() {
        let mut s = two_item();
        s.nodes = Some(1);
        assert!(matches!(s.validate(), Err(ScenarioError::UnknownNode { .. })));
    }

    #[test]
    fn quorum_intersection_is_enforced() {
        let mut s = two_item();
        s.f = 1;
        assert!(matches!(s.validate(), Err(ScenarioError::QuorumIntersection { .. })));
    }

    #[test]
    fn conditional_write_of_initial_value_is_rejected() {
        let mut s = two_item();
        s.transactions[0].write_rule[0].value = Value::Nil;
        assert!(matches!(s.validate(), Err(ScenarioError::InitialConditionalWrite { .. })));
    }

    #[test]
    fn realized_writes_follow_condition() {
        let s = two_item();
        let t = &s.transactions[0];
        let init = |i: &ItemId| s.initial(i);
        assert_eq!(t.realized_writes(&[("X1".into(), Value::Nil)], init).len(), 1);
        assert!(t.realized_writes(&[("X1".into(), Value::Int(9))], init).is_empty());
    }

    #[test]
    fn json_schema_round_trip() {
        let s = two_item();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert!(v["transactions"][0]["readSet"].is_array());
        assert_eq!(v["transactions"][0]["writeRule"][0]["condition"], "allReadsInitial");
    }
}

//! Built-in workloads: the two counterexample constructions plus the
//! probes the property matrix runs.

use crate::txmodel::{ItemDecl, Scenario, TransactionProgram, WriteCondition, WriteRule};
use crate::value::{ItemId, NodeId, TxnId, Value};

use WriteCondition::{AllReadsInitial, Always};

fn items(names: &[&str]) -> Vec<ItemDecl> {
    names.iter().map(|n| ItemDecl { id: ItemId::new(*n), initial: Value::Nil }).collect()
}

fn txn(id: &str, client: usize, reads: &[&str], writes: &[(&str, WriteCondition, i64)]) -> TransactionProgram {
    TransactionProgram {
        txn_id: TxnId::new(id),
        client,
        read_set: reads.iter().map(|r| ItemId::new(*r)).collect(),
        write_rule: writes
            .iter()
            .map(|(t, c, v)| WriteRule { target: ItemId::new(*t), condition: *c, value: Value::Int(*v) })
            .collect(),
    }
}

fn replicated(name: &str, item_names: &[&str], n: usize, f: usize, transactions: Vec<TransactionProgram>) -> Scenario {
    let all: Vec<NodeId> = (0..n).collect();
    Scenario {
        name: name.into(),
        nodes: Some(n),
        items: items(item_names),
        placement: item_names.iter().map(|i| (ItemId::new(*i), all.clone())).collect(),
        k: n,
        f,
        transactions,
    }
}

/// Two items sharded on two nodes; each transaction reads one and writes
/// the other only if its read returned the initial value.
pub fn fids() -> Scenario {
    Scenario {
        name: "fids".into(),
        nodes: Some(2),
        items: items(&["X1", "X2"]),
        placement: [(ItemId::new("X1"), vec![0]), (ItemId::new("X2"), vec![1])].into_iter().collect(),
        k: 1,
        f: 0,
        transactions: vec![
            txn("T1", 0, &["X1"], &[("X2", AllReadsInitial, 2)]),
            txn("T2", 1, &["X2"], &[("X1", AllReadsInitial, 1)]),
        ],
    }
}

/// Three items replicated on three nodes (k = 3, f = 1); `T_i` reads
/// `X_{(i mod 3)+1}` and conditionally writes `X_i`.
pub fn rfids() -> Scenario {
    replicated(
        "rfids",
        &["X1", "X2", "X3"],
        3,
        1,
        vec![
            txn("T1", 0, &["X2"], &[("X1", AllReadsInitial, 1)]),
            txn("T2", 1, &["X3"], &[("X2", AllReadsInitial, 2)]),
            txn("T3", 2, &["X1"], &[("X3", AllReadsInitial, 3)]),
        ],
    )
}

/// Node `N_i` (0-based `i - 1`) whose traffic with `T_i` the R-FIDS
/// schedule withholds.
pub fn rfids_silent_node(txn_index: usize) -> NodeId {
    txn_index
}

/// One transaction reading `r` items then unconditionally writing `W`,
/// replicated on three nodes with f = 1.
pub fn solo_reads(r: usize) -> Scenario {
    let reads: Vec<String> = (1..=r).map(|i| format!("X{i}")).collect();
    let read_refs: Vec<&str> = reads.iter().map(String::as_str).collect();
    replicated(&format!("solo-r{r}"), &["X1", "X2", "X3", "W"], 3, 1, vec![txn("T1", 0, &read_refs, &[("W", Always, 7)])])
}

/// Solo read-only transaction.
pub fn solo_read_only() -> Scenario {
    replicated("solo-read-only", &["X1", "X2"], 3, 1, vec![txn("T1", 0, &["X1", "X2"], &[])])
}

/// Solo transaction reading `X2` and writing `X1`.
pub fn strong_ir_probe() -> Scenario {
    replicated("strong-ir-probe", &["X1", "X2"], 3, 1, vec![txn("T1", 0, &["X2"], &[("X1", Always, 1)])])
}

/// Solo transaction used by the crash-injection sweep.
pub fn seamless_probe() -> Scenario {
    replicated("seamless-probe", &["X1", "X2"], 3, 1, vec![txn("T1", 0, &["X1"], &[("X2", Always, 2)])])
}

/// Two concurrent writers with disjoint data sets, replicated everywhere.
pub fn dap_probe() -> Scenario {
    replicated(
        "dap-probe",
        &["X1", "X2", "X3", "X4"],
        3,
        1,
        vec![txn("T1", 0, &["X1"], &[("X2", Always, 2)]), txn("T2", 1, &["X3"], &[("X4", Always, 4)])],
    )
}

/// Two writers sharing `X1` (on `N0`) whose data sets are disjoint on
/// `N1`, which stores `X2` and `X3`.
pub fn ddap_probe() -> Scenario {
    Scenario {
        name: "ddap-probe".into(),
        nodes: Some(2),
        items: items(&["X1", "X2", "X3"]),
        placement: [(ItemId::new("X1"), vec![0]), (ItemId::new("X2"), vec![1]), (ItemId::new("X3"), vec![1])]
            .into_iter()
            .collect(),
        k: 1,
        f: 0,
        transactions: vec![txn("T1", 0, &["X1"], &[("X2", Always, 2)]), txn("T2", 1, &["X1"], &[("X3", Always, 3)])],
    }
}

pub const BUILTIN_NAMES: [&str; 11] = [
    "fids",
    "rfids",
    "solo-read-only",
    "strong-ir-probe",
    "seamless-probe",
    "dap-probe",
    "ddap-probe",
    "solo-r0",
    "solo-r1",
    "solo-r2",
    "solo-r3",
];

/// Looks up a built-in scenario; accepts an optional `builtin:` prefix and
/// `solo-rN` for any `N` up to 3.
pub fn builtin(name: &str) -> Option<Scenario> {
    let name = name.strip_prefix("builtin:").unwrap_or(name);
    match name {
        "fids" => Some(fids()),
        "rfids" => Some(rfids()),
        "solo-read-only" => Some(solo_read_only()),
        "strong-ir-probe" => Some(strong_ir_probe()),
        "seamless-probe" => Some(seamless_probe()),
        "dap-probe" => Some(dap_probe()),
        "ddap-probe" => Some(ddap_probe()),
        _ => {
            let r: usize = name.strip_prefix("solo-r")?.parse().ok()?;
            (r <= 3).then(|| solo_reads(r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap_or_else(|| panic!("{name}"));
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(builtin("solo-r4").is_none());
        assert!(builtin("builtin:fids").is_some());
    }

    #[test]
    fn rfids_read_sets_rotate() {
        let s = rfids();
        for (i, t) in s.transactions.iter().enumerate() {
            let reads = format!("X{}", (i + 1) % 3 + 1);
            assert_eq!(t.read_set, vec![ItemId::new(reads)]);
            assert_eq!(t.write_rule[0].target, ItemId::new(format!("X{}", i + 1)));
        }
    }

    #[test]
    fn ddap_probe_is_disjoint_on_n1_only() {
        let s = ddap_probe();
        let (a, b) = (s.transactions[0].data_set(), s.transactions[1].data_set());
        assert!(a.intersection(&b).next().is_some());
        let local = s.stored_items(1);
        assert!(a.intersection(&b).all(|x| !local.contains(x)));
    }
}

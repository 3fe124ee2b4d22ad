#![allow(dead_code)]

use pdts_lab::harness::{adversary_config, scenarios};
use pdts_lab::memory::Memory;
use pdts_lab::protocols::VariantTag;
use pdts_lab::simkit::{Completion, Policy, RandomPolicy, Schedule, Sim, SimConfig};
use pdts_lab::txmodel::{CommittedHistory, CommittedTxn, ExecutionTrace, Op, OpKind, Scenario};
use pdts_lab::{ItemId, TxnId, Value};
use rand::seq::SliceRandom;
use rand::Rng;

/// Every built-in scenario.
pub fn all_scenarios() -> Vec<Scenario> {
    scenarios::BUILTIN_NAMES.iter().map(|n| scenarios::builtin(n).expect("built-in")).collect()
}

/// Runs `scenario` under a seeded random policy and returns the trace with
/// the final memory. Asynchronous runs never force deliveries.
pub fn random_run(scenario: &Scenario, tag: VariantTag, seed: u64, crash_prob: f64, asynchronous: bool) -> (ExecutionTrace, Memory) {
    let config = if asynchronous { adversary_config(scenario) } else { SimConfig::for_scenario(scenario) };
    let mut sim = Sim::new(config, tag.into(), scenario).expect("valid scenario");
    let mut policy = RandomPolicy::new(seed).with_crashes(crash_prob);
    while let Some(d) = policy.choose(&sim) {
        sim.apply(&d).expect("policy picks enabled choices");
    }
    let memory = sim.memory().clone();
    let script = sim.decisions().iter().map(|d| d.decision.clone()).collect();
    (sim.into_trace(Schedule::scripted(script, Completion::Stop)), memory)
}

fn item(i: usize) -> ItemId {
    ItemId::new(format!("X{i}"))
}

/// History built by a random serial execution, then optionally corrupted by
/// changing one read value. Values come from a small domain so that several
/// transactions may write the same value.
pub fn random_history(rng: &mut impl Rng, max_txns: usize, max_items: usize) -> CommittedHistory {
    let n_txns = rng.gen_range(1..=max_txns);
    let n_items = rng.gen_range(1..=max_items);
    let domain = rng.gen_range(2..=4i64);
    let mut state: Vec<Value> = vec![Value::Nil; n_items];
    let mut txns = Vec::new();
    for t in 0..n_txns {
        let mut ops = Vec::new();
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(rng);
        let n_reads = rng.gen_range(0..=n_items.min(3));
        for &x in &items[..n_reads] {
            ops.push(Op::read(item(x), state[x].clone()));
        }
        items.shuffle(rng);
        let n_writes = rng.gen_range(0..=n_items.min(2));
        for &x in &items[..n_writes] {
            let v = Value::Int(rng.gen_range(1..=domain));
            state[x] = v.clone();
            ops.push(Op::write(item(x), v));
        }
        txns.push(CommittedTxn { txn: TxnId::new(format!("T{}", t + 1)), ops });
    }
    if rng.gen_bool(0.6) {
        let reads: Vec<(usize, usize)> = txns
            .iter()
            .enumerate()
            .flat_map(|(t, c)| c.ops.iter().enumerate().filter(|(_, o)| o.kind == OpKind::Read).map(move |(i, _)| (t, i)))
            .collect();
        if let Some(&(t, i)) = reads.choose(rng) {
            let v = rng.gen_range(0..=domain);
            txns[t].ops[i].value = if v == 0 { Value::Nil } else { Value::Int(v) };
        }
    }
    // Response order need not match the serial order.
    txns.shuffle(rng);
    CommittedHistory { txns, initial: (0..n_items).map(|x| (item(x), Value::Nil)).collect() }
}

mod common;

use std::collections::BTreeSet;

use pdts_lab::checkers::{check_invariants, check_read_delay, check_weak_ir, check_weak_progress};
use pdts_lab::memory::{contending_pairs, primitive_steps, Memory, PrimKind, PrimOp};
use pdts_lab::protocols::{Layout, VariantTag};
use pdts_lab::txmodel::analysis::{step_depths, DepthAnalysis};
use pdts_lab::txmodel::history::derive_history;
use pdts_lab::txmodel::{ExecutionTrace, HappenedBefore, Scenario, StepBody};
use pdts_lab::TxnId;
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct RunSpec {
    scenario: usize,
    tag: VariantTag,
    seed: u64,
    crash_prob: f64,
    asynchronous: bool,
}

impl RunSpec {
    fn scenario(&self) -> Scenario {
        common::all_scenarios().swap_remove(self.scenario)
    }

    fn run(&self) -> (ExecutionTrace, Memory) {
        common::random_run(&self.scenario(), self.tag, self.seed, self.crash_prob, self.asynchronous)
    }
}

fn spec_over(scenarios: Vec<usize>, asynchronous: BoxedStrategy<bool>) -> impl Strategy<Value = RunSpec> {
    (proptest::sample::select(scenarios), 0..VariantTag::ALL.len(), any::<u64>(), prop_oneof![Just(0.0), Just(0.05)], asynchronous)
        .prop_map(|(scenario, v, seed, crash_prob, asynchronous)| RunSpec { scenario, tag: VariantTag::ALL[v], seed, crash_prob, asynchronous })
}

fn run_spec() -> impl Strategy<Value = RunSpec> {
    spec_over((0..common::all_scenarios().len()).collect(), any::<bool>().boxed())
}

fn sync_spec() -> impl Strategy<Value = RunSpec> {
    spec_over((0..common::all_scenarios().len()).collect(), Just(false).boxed())
}

fn replicated_spec() -> impl Strategy<Value = RunSpec> {
    let replicated = common::all_scenarios().iter().enumerate().filter(|(_, s)| s.f >= 1).map(|(i, _)| i).collect();
    spec_over(replicated, any::<bool>().boxed())
}

fn replay_memory(trace: &ExecutionTrace, spec: &RunSpec) -> Result<Memory, TestCaseError> {
    let scenario = trace.scenario();
    let layout = Layout::new(scenario, spec.tag.into(), scenario.n_nodes(), trace.meta.config.delta);
    let mut mem = Memory::new();
    for (obj, v) in layout.objects() {
        mem.declare(obj, v);
    }
    for p in primitive_steps(trace) {
        let op = match p.op {
            PrimKind::Read => PrimOp::Read,
            PrimKind::Write => PrimOp::Write(p.args[0].clone()),
            PrimKind::Cas => PrimOp::Cas { expected: p.args[0].clone(), new: p.args[1].clone() },
        };
        let access = mem.apply(p.obj.node, &p.obj, &op).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&access.ret, &p.ret, "step {} returned a value the object never held", p.trace_index);
    }
    Ok(mem)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn runs_are_deterministic(spec in run_spec()) {
        let (a, _) = spec.run();
        let (b, _) = spec.run();
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
        prop_assert_eq!(a.meta_json(), b.meta_json());
    }

    #[test]
    fn invariant_suite_holds(spec in run_spec()) {
        let (trace, _) = spec.run();
        let report = check_invariants(&trace).unwrap();
        prop_assert!(report.all_hold(), "{:?}: {:?}", spec, report.failures());
    }

    #[test]
    fn contention_is_symmetric(spec in run_spec()) {
        let (trace, _) = spec.run();
        let pairs: BTreeSet<(usize, usize)> = contending_pairs(&trace).into_iter().collect();
        for &(a, b) in &pairs {
            prop_assert!(pairs.contains(&(b, a)));
            prop_assert_ne!(a, b);
        }
    }

    #[test]
    fn replaying_primitives_reproduces_memory(spec in run_spec()) {
        let (trace, memory) = spec.run();
        let replayed = replay_memory(&trace, &spec)?;
        let got: Vec<_> = replayed.objects().collect();
        let want: Vec<_> = memory.objects().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn happened_before_is_a_strict_order(spec in run_spec()) {
        let (trace, _) = spec.run();
        let hb = HappenedBefore::new(&trace);
        prop_assert!(hb.is_acyclic());
        for i in 0..hb.len() {
            prop_assert!(!hb.before(i, i));
            for &p in hb.direct_preds(i) {
                prop_assert!(p < i, "edge {} -> {} points backwards", p, i);
                prop_assert!(hb.before(p, i));
                for &q in hb.direct_preds(p) {
                    prop_assert!(hb.before(q, i), "not transitive at {} -> {} -> {}", q, p, i);
                }
            }
        }
    }

    #[test]
    fn depth_grows_along_happened_before(spec in run_spec()) {
        let (trace, _) = spec.run();
        let hb = HappenedBefore::new(&trace);
        let depths = step_depths(&trace).unwrap();
        for i in 0..trace.len() {
            for &p in hb.direct_preds(i) {
                if trace.steps[p].txn.is_some() && trace.steps[p].txn == trace.steps[i].txn {
                    if let (Some(dp), Some(di)) = (depths[p], depths[i]) {
                        prop_assert!(dp <= di, "depth drops from {} at {} to {} at {}", dp, p, di, i);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_depth_reaches_txn_depth_before_response(spec in run_spec()) {
        let (trace, _) = spec.run();
        let da = DepthAnalysis::new(&trace).unwrap();
        for txn in trace.txns() {
            let Some(r) = trace.response_index(&txn) else { continue };
            let d = da.txn_depth(&txn).unwrap();
            prop_assert!(da.partial_depth(trace.len() - 1, &txn).unwrap() <= d);
            prop_assert_eq!(da.partial_depth(r, &txn).unwrap(), d);
        }
    }

    #[test]
    fn history_depends_only_on_responses(spec in run_spec()) {
        let (trace, _) = spec.run();
        let mut stripped = trace.clone();
        stripped.steps.retain(|s| matches!(s.body, StepBody::Response { .. }) && s.is_coordinator());
        prop_assert_eq!(derive_history(&trace).unwrap(), derive_history(&stripped).unwrap());
    }

    #[test]
    fn replicated_runs_learn_no_value_before_depth_two(spec in replicated_spec()) {
        let (trace, _) = spec.run();
        let v = check_read_delay(&trace).unwrap();
        prop_assert!(v.pass, "{:?}: {}", spec, v.details);
    }

    #[test]
    fn synchronous_runs_decide_everything(spec in sync_spec()) {
        let (trace, _) = spec.run();
        let v = check_weak_progress(std::slice::from_ref(&trace)).unwrap();
        prop_assert!(v.pass, "{:?}: {}", spec, v.details);
    }
}

#[test]
fn restart_handler_ahead_of_a_read_keeps_the_delivery_bound() {
    let spec = RunSpec { scenario: 1, tag: VariantTag::NoSeamlessFt, seed: 16162280063533651212, crash_prob: 0.05, asynchronous: false };
    let (trace, _) = spec.run();
    assert!(check_invariants(&trace).unwrap().failures().is_empty());
}

#[test]
fn restarted_transaction_that_stops_writing_keeps_weak_ir() {
    let spec = RunSpec { scenario: 1, tag: VariantTag::NoSeamlessFt, seed: 16162280063533651219, crash_prob: 0.05, asynchronous: false };
    let (trace, _) = spec.run();
    let t3 = TxnId::new("T3");
    assert!(trace.result(&t3).is_some_and(|r| r.write_set.is_empty()));
    assert!(check_weak_ir(&trace).unwrap().pass);
}

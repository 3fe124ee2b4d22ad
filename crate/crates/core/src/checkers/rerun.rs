//! Checkers that quantify over executions and therefore re-run the
//! simulator: strong invisible reads (twin substitution) and s-seamless
//! fault tolerance (crash injection).

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::properties::check_weak_ir;
use super::{CheckError, FootprintEntry, PropertyTag, Verdict, Witness};
use crate::simkit::{self, Completion, Decision, Schedule};
use crate::txmodel::analysis::DepthAnalysis;
use crate::txmodel::{ExecutionTrace, StepBody};
use crate::value::{NodeId, TxnId};

/// Bounded search for a matching completion after a crash.
pub const RANDOM_COMPLETIONS: u64 = 64;

fn footprint(trace: &ExecutionTrace, txn: &TxnId) -> Vec<FootprintEntry> {
    trace
        .steps
        .iter()
        .filter(|s| s.txn.as_ref() == Some(txn))
        .filter_map(|s| match &s.body {
            StepBody::Prim { obj, op, nontrivial: true, args, ret } => Some(FootprintEntry {
                obj: obj.clone(),
                op: format!("{op:?}").to_lowercase(),
                args: args.clone(),
                ret: ret.clone(),
            }),
            _ => None,
        })
        .collect()
}

fn multiset_diff(a: &[FootprintEntry], b: &[FootprintEntry]) -> Vec<FootprintEntry> {
    let mut counts: BTreeMap<&FootprintEntry, i64> = BTreeMap::new();
    for e in b {
        *counts.entry(e).or_default() += 1;
    }
    let mut out = Vec::new();
    for e in a {
        let c = counts.entry(e).or_default();
        if *c > 0 {
            *c -= 1;
        } else {
            out.push(e.clone());
        }
    }
    out
}

/// Strong invisible reads: weak IR plus, for each transaction with a
/// non-empty write set, a twin with the same writes and no reads leaves an
/// identical non-trivial footprint and leaves every other transaction's
/// footprint unchanged.
pub fn check_strong_ir(trace: &ExecutionTrace) -> Result<Verdict, CheckError> {
    let weak = check_weak_ir(trace)?;
    if !weak.pass {
        return Ok(Verdict { property: PropertyTag::StrongIR, ..weak });
    }
    let meta = &trace.meta;
    let mut checked = 0;
    for txn in trace.txns() {
        let Some(result) = trace.result(&txn) else { continue };
        if result.write_set.is_empty() {
            continue;
        }
        checked += 1;
        let writes: Vec<_> = result.write_set.iter().map(|w| (w.item.clone(), w.val.clone())).collect();
        let mut scenario = meta.scenario.clone();
        let idx = scenario.txn_index(&txn).ok_or_else(|| CheckError::Precondition(format!("{txn} not in scenario")))?;
        scenario.transactions[idx] = scenario.transactions[idx].write_only_twin(&writes);
        let script: Vec<Decision> = meta
            .decisions
            .iter()
            .filter(|d| !(d.read_phase && d.txn.as_ref() == Some(&txn)))
            .map(|d| d.decision.clone())
            .collect();
        let twin = simkit::run_lenient(&meta.config, meta.algorithm, &scenario, &script, Completion::Fair)?;
        for other in trace.txns() {
            let (orig, alt) = (footprint(trace, &other), footprint(&twin, &other));
            let same = if other == txn { multiset_diff(&orig, &alt).is_empty() && multiset_diff(&alt, &orig).is_empty() } else { orig == alt };
            if !same {
                let details = if other == txn {
                    format!("{txn}'s twin without reads has a different non-trivial footprint")
                } else {
                    format!("substituting {txn}'s twin changed {other}'s non-trivial footprint")
                };
                let witness = Witness::Footprint {
                    txn: txn.clone(),
                    only_original: multiset_diff(&orig, &alt),
                    only_twin: multiset_diff(&alt, &orig),
                    other: (other != txn).then_some(other),
                };
                return Ok(Verdict::fail(PropertyTag::StrongIR, witness, details));
            }
        }
    }
    Ok(Verdict::pass(PropertyTag::StrongIR, format!("{checked} writing transactions match their read-free twins")))
}

type Observable = (Vec<(TxnId, Option<crate::txmodel::TxnResult>)>, BTreeMap<TxnId, u32>);

fn observable(trace: &ExecutionTrace) -> Result<Observable, CheckError> {
    let da = DepthAnalysis::new(trace)?;
    let mut depths = BTreeMap::new();
    for t in trace.txns() {
        if trace.response_index(&t).is_some() {
            depths.insert(t.clone(), da.txn_depth(&t)?);
        }
    }
    Ok((trace.invocations_and_responses(), depths))
}

struct Injection {
    node: NodeId,
    position: usize,
    schedule: Schedule,
    matched: bool,
    reason: String,
}

/// s-seamless fault tolerance around the execution recorded in `trace`:
/// a crash of every live node injected at every decision prefix must admit
/// a completion with the same invocations, responses and depths.
pub fn check_seamless_ft(trace: &ExecutionTrace, s: usize) -> Result<Verdict, CheckError> {
    if s == 0 {
        return Ok(Verdict::pass(PropertyTag::SeamlessFT, "every implementation is 0-seamless"));
    }
    let meta = &trace.meta;
    let existing = trace.crashed_nodes();
    if meta.scenario.f < s {
        return Err(CheckError::Precondition(format!("f = {} is below s = {s}", meta.scenario.f)));
    }
    if existing.len() >= s {
        return Err(CheckError::Precondition(format!("base execution already has {} crashes", existing.len())));
    }
    let reference = observable(trace)?;
    let prefix: Vec<Decision> = meta.decisions.iter().map(|d| d.decision.clone()).collect();
    let n_nodes = meta.scenario.n_nodes().max(meta.config.n_nodes);
    let mut jobs = Vec::new();
    for pos in 0..=prefix.len() {
        let crashed_before: Vec<NodeId> = prefix[..pos]
            .iter()
            .filter_map(|d| match d {
                Decision::Crash { node } => Some(*node),
                _ => None,
            })
            .collect();
        for node in (0..n_nodes).filter(|n| !crashed_before.contains(n)) {
            jobs.push((pos, node));
        }
    }
    let results: Vec<Result<Injection, CheckError>> = jobs
        .par_iter()
        .map(|&(pos, node)| {
            let base = Schedule::scripted(prefix[..pos].to_vec(), Completion::Fair);
            let schedule = base.inject_crash(node, pos)?;
            let Schedule::Scripted { script, .. } = &schedule else { unreachable!("scripted in, scripted out") };
            let mut reason = String::new();
            let completions = std::iter::once(Completion::Fair).chain((0..RANDOM_COMPLETIONS).map(|seed| Completion::Random { seed }));
            for then in completions {
                let attempt = Schedule::scripted(script.clone(), then);
                match simkit::run(&meta.config, meta.algorithm, &meta.scenario, &attempt) {
                    Ok(t) => {
                        let obs = observable(&t)?;
                        if obs == reference {
                            return Ok(Injection { node, position: pos, schedule: attempt, matched: true, reason });
                        }
                        if reason.is_empty() {
                            reason = if obs.0 != reference.0 {
                                "invocation/response sequence differs".to_string()
                            } else {
                                format!("depths differ: expected {:?}, observed {:?}", reference.1, obs.1)
                            };
                        }
                    }
                    Err(e) => {
                        if reason.is_empty() {
                            reason = format!("completion failed: {e}");
                        }
                    }
                }
            }
            let fair = Schedule::scripted(script.clone(), Completion::Fair);
            Ok(Injection { node, position: pos, schedule: fair, matched: false, reason })
        })
        .collect();
    let mut total = 0;
    for r in results {
        let inj = r?;
        total += 1;
        if !inj.matched {
            let details = format!(
                "no seamless completion found within budget ({} completions) after crashing node {} at position {}: {}",
                RANDOM_COMPLETIONS + 1,
                inj.node,
                inj.position,
                inj.reason
            );
            let witness = Witness::CrashInjection { node: inj.node, position: inj.position, schedule: inj.schedule, reason: inj.reason };
            return Ok(Verdict::fail(PropertyTag::SeamlessFT, witness, details));
        }
    }
    Ok(Verdict::pass(PropertyTag::SeamlessFT, format!("{total} crash injections, each with a matching completion")))
}

//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use pdts_lab::checkers::serializability::{brute_force, graph_check};
use pdts_lab::checkers::{
    check_dap, check_ddap, check_fast_decision, check_invariants, check_read_delay, check_seamless_ft, check_strong_ir,
    check_trace_serializability, check_weak_ir, Verdict, Witness,
};
use pdts_lab::harness::matrix::{Column, Replay};
use pdts_lab::harness::scenarios::{self, rfids_silent_node};
use pdts_lab::harness::{adversary_config, build_matrix, builtin_schedule, explore, ExploreMode, Granularity};
use pdts_lab::harness::explore::DEFAULT_STATE_BUDGET;
use pdts_lab::protocols::VariantTag;
use pdts_lab::simkit::{self, Completion, Decision, Schedule, SimConfig};
use pdts_lab::txmodel::analysis::DepthAnalysis;
use pdts_lab::txmodel::{ExecutionTrace, Outcome, Scenario, TraceMeta};
use pdts_lab::TxnId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Res = Result<String, String>;
type Criterion = (&'static str, fn(&mut Collected) -> Res);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Traces produced by criteria 1 to 7, for the invariant suite.
#[derive(Default)]
struct Collected {
    traces: Vec<ExecutionTrace>,
    matrix_failures: Vec<String>,
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdts-lab"))
}

fn cli(args: &[&str]) -> Result<Output, String> {
    bin().args(args).output().map_err(err)
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn load_trace(path: &Path) -> Result<ExecutionTrace, String> {
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta.json");
    let meta: TraceMeta = serde_json::from_str(&fs::read_to_string(PathBuf::from(meta_path)).map_err(err)?).map_err(err)?;
    ExecutionTrace::read_jsonl(fs::read_to_string(path).map_err(err)?.as_bytes(), meta).map_err(err)
}

fn cycle_txns(v: &Verdict) -> Option<(usize, BTreeSet<TxnId>)> {
    match &v.witness {
        Some(Witness::Cycle { edges }) => Some((edges.len(), edges.iter().flat_map(|e| [e.from.clone(), e.to.clone()]).collect())),
        _ => None,
    }
}

fn sync_run(scenario: &Scenario, tag: VariantTag, schedule: &Schedule) -> Result<ExecutionTrace, String> {
    simkit::run(&SimConfig::for_scenario(scenario), tag.into(), scenario, schedule).map_err(err)
}

fn fids_reproduction(c: &mut Collected) -> Res {
    let dir = tempfile::tempdir().map_err(err)?;
    let out = dir.path().join("fids.jsonl");
    let run = cli(&["run", "--scenario", "builtin:fids", "--algorithm", "base", "--schedule", "builtin:fids", "--out", path_str(&out)])?;
    ensure(run.status.success(), || format!("run exited with {}", run.status))?;
    let trace = load_trace(&out)?;
    let scenario = trace.scenario().clone();
    for p in &scenario.transactions {
        let r = trace.result(&p.txn_id).ok_or_else(|| format!("{} undecided", p.txn_id))?;
        ensure(r.outcome == Outcome::Commit, || format!("{} aborted", p.txn_id))?;
        for read in &r.read_set {
            let initial = scenario.items.iter().find(|d| d.id == read.item).map(|d| &d.initial);
            ensure(initial == Some(&read.val), || format!("{} read {:?} from {}", p.txn_id, read.val, read.item))?;
        }
    }
    let check = cli(&["check", "--trace", path_str(&out), "--property", "serializability"])?;
    ensure(check.status.code() == Some(1), || format!("check exited with {}", check.status))?;
    let verdict: Verdict = serde_json::from_slice(&check.stdout).map_err(err)?;
    let (len, txns) = cycle_txns(&verdict).ok_or("no cycle witness")?;
    ensure(len == 2 && txns.len() == 2, || format!("cycle of {len} edges over {} transactions", txns.len()))?;
    c.traces.push(trace);
    Ok(format!("both commit on initial values; 2-cycle over {:?}", txns))
}

fn rfids_reproduction(c: &mut Collected) -> Res {
    let s = scenarios::rfids();
    let schedule = builtin_schedule("rfids", &s, VariantTag::Base.into()).ok_or("no rfids schedule")?.map_err(err)?;
    let trace = simkit::run(&adversary_config(&s), VariantTag::Base.into(), &s, &schedule).map_err(err)?;
    let commits = s.transactions.iter().filter(|p| trace.result(&p.txn_id).is_some_and(|r| r.outcome == Outcome::Commit)).count();
    ensure(commits == 3, || format!("{commits} of 3 committed"))?;
    let v = check_trace_serializability(&trace).map_err(err)?;
    let (len, txns) = cycle_txns(&v).ok_or("no cycle witness")?;
    ensure(!v.pass && len == 3 && txns.len() == 3, || format!("cycle of {len} edges over {} transactions", txns.len()))?;
    c.traces.push(trace);
    let mut depths = Vec::new();
    for (i, p) in s.transactions.iter().enumerate() {
        let solo = s.restricted_to(std::slice::from_ref(&p.txn_id)).map_err(err)?;
        let crash = Schedule::scripted(vec![Decision::Crash { node: rfids_silent_node(i) }], Completion::Fair);
        let t = sync_run(&solo, VariantTag::Base, &crash)?;
        ensure(t.result(&p.txn_id).is_some(), || format!("{} undecided in its solo run", p.txn_id))?;
        let da = DepthAnalysis::new(&t).map_err(err)?;
        let depth = da.txn_depth(&p.txn_id).map_err(err)?;
        ensure(depth == 4, || format!("{} solo depth {depth}", p.txn_id))?;
        let learned = da.learned_depths(&p.txn_id).map_err(err)?;
        ensure(!learned.is_empty() && learned.iter().all(|(_, _, pd)| *pd >= 2), || format!("{} learned at {learned:?}", p.txn_id))?;
        let rd = check_read_delay(&t).map_err(err)?;
        ensure(rd.pass, || rd.details.clone())?;
        depths.push(format!("{}:{depth}", p.txn_id));
        c.traces.push(t);
    }
    Ok(format!("3 commits, 3-cycle over {txns:?}; crash-injected solo depths {}", depths.join(" ")))
}

/// Re-runs a failing cell's replay and checks the same property fails again.
fn replay_fails_again(column: Column, property: &str, replay: &Replay) -> Result<ExecutionTrace, String> {
    let t = replay.run().map_err(err)?;
    let fails = match column {
        Column::Serializability => !check_trace_serializability(&t).map_err(err)?.pass,
        Column::FastDecision => !check_fast_decision(&t).map_err(err)?.pass,
        Column::WeakIR => !check_weak_ir(&t).map_err(err)?.pass,
        Column::StrongIR => !check_strong_ir(&t).map_err(err)?.pass,
        Column::DapDdap => match property {
            "DAP" => !check_dap(&t).map_err(err)?.pass,
            "DDAP" => !check_ddap(&t).map_err(err)?.pass,
            _ => !(check_dap(&t).map_err(err)?.pass && check_ddap(&t).map_err(err)?.pass),
        },
        Column::SeamlessFt1 => {
            // The crash run must differ observably from the crash-free one.
            let reference = Replay { schedule: Schedule::Fair, ..replay.clone() }.run().map_err(err)?;
            observable(&t)? != observable(&reference)?
        }
    };
    ensure(fails, || format!("{} replay no longer fails", column.title()))?;
    Ok(t)
}

type Observable = (Vec<(TxnId, Option<Outcome>)>, Vec<(TxnId, u32)>);

fn observable(t: &ExecutionTrace) -> Result<Observable, String> {
    let da = DepthAnalysis::new(t).map_err(err)?;
    let seq = t.invocations_and_responses().into_iter().map(|(txn, r)| (txn, r.map(|r| r.outcome))).collect();
    let mut depths = Vec::new();
    for txn in t.txns() {
        if t.result(&txn).is_some() {
            depths.push((txn.clone(), da.txn_depth(&txn).map_err(err)?));
        }
    }
    Ok((seq, depths))
}

fn property_matrix(c: &mut Collected) -> Res {
    let report = build_matrix().map_err(err)?;
    let mut fails = 0;
    for row in &report.rows {
        c.matrix_failures.extend(row.invariant_failures.iter().map(|f| format!("{}: {f}", row.variant.cli_name())));
        for cell in row.cells.iter().filter(|c| !c.pass) {
            let replay = cell.replay.as_ref().ok_or_else(|| format!("{} {} has no replay", row.variant.cli_name(), cell.column.title()))?;
            c.traces.push(replay_fails_again(cell.column, &cell.property, replay)?);
            fails += 1;
        }
    }
    ensure(report.matches_expected, || {
        let rows: Vec<String> = report
            .rows
            .iter()
            .map(|r| format!("{}: {}", r.variant.cli_name(), r.cells.iter().map(|c| if c.pass { "P" } else { "F" }).collect::<String>()))
            .collect();
        format!("matrix differs: {}", rows.join(", "))
    })?;
    Ok(format!("table matches; {fails} FAIL cells, each replayed and failing again"))
}

fn fast_decision_depths(c: &mut Collected) -> Res {
    let mut summary = Vec::new();
    for r in 0..=3u32 {
        let s = scenarios::solo_reads(r as usize);
        let txn = s.transactions[0].txn_id.clone();
        let measure = |tag: VariantTag| -> Result<(u32, u32, ExecutionTrace), String> {
            let t = sync_run(&s, tag, &Schedule::Fair)?;
            let da = DepthAnalysis::new(&t).map_err(err)?;
            let depth = da.txn_depth(&txn).map_err(err)?;
            let at_full_reads = da.learned_depths(&txn).map_err(err)?.iter().map(|(_, _, pd)| *pd).max().unwrap_or(0);
            Ok((depth, at_full_reads + 2, t))
        };
        let (depth, bound, base) = measure(VariantTag::Base)?;
        ensure(depth == 2 * r + 2 && depth <= bound, || format!("base r={r}: depth {depth}, bound {bound}"))?;
        let v = check_fast_decision(&base).map_err(err)?;
        ensure(v.pass, || format!("base r={r}: {}", v.details))?;
        let (slow, slow_bound, no_fast) = measure(VariantTag::NoFastDecision)?;
        ensure(slow == slow_bound + 2, || format!("no-fast r={r}: depth {slow}, bound {slow_bound}"))?;
        summary.push(format!("r={r}: {depth}/{slow}"));
        c.traces.extend([base, no_fast]);
    }
    Ok(format!("base/no-fast depths {}", summary.join(", ")))
}

fn seamless_sweep(c: &mut Collected) -> Res {
    let s = scenarios::seamless_probe();
    ensure(s.k == 3 && s.f == 1, || format!("probe has k={} f={}", s.k, s.f))?;
    let base = sync_run(&s, VariantTag::Base, &Schedule::Fair)?;
    let v = check_seamless_ft(&base, 1).map_err(err)?;
    ensure(v.pass, || format!("base: {}", v.details))?;
    let broken = sync_run(&s, VariantTag::NoSeamlessFt, &Schedule::Fair)?;
    let w = check_seamless_ft(&broken, 1).map_err(err)?;
    ensure(!w.pass, || "no-seamless passes the sweep".into())?;
    if let Some(Witness::CrashInjection { schedule, .. }) = &w.witness {
        c.traces.push(simkit::run(&broken.meta.config, broken.meta.algorithm, &s, schedule).map_err(err)?);
    }
    c.traces.extend([base, broken]);
    Ok(format!("base: {}; no-seamless: {}", v.details, w.details))
}

fn oracle_agreement(_: &mut Collected) -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut serializable) = (0, 0);
    const N: usize = 2000;
    for i in 0..N {
        let h = common::random_history(&mut rng, 6, 4);
        let brute = brute_force(&h).map_err(err)?.is_some();
        let graph = graph_check(&h).is_serializable();
        ensure(brute == graph, || format!("instance {i}: brute force {brute}, graph {graph}: {h:?}"))?;
        agree += 1;
        serializable += usize::from(brute);
    }
    Ok(format!("{agree} histories, 0 disagreements ({serializable} serializable)"))
}

fn exhaustive_soundness(c: &mut Collected) -> Res {
    let fids = scenarios::fids();
    let mut counts = Vec::new();
    for tag in VariantTag::ALL {
        let ex = explore(&fids, tag.into(), ExploreMode::Exhaustive { max_states: DEFAULT_STATE_BUDGET }, Granularity::TrivialBlocks)
            .map_err(err)?;
        let n = ex.violations.len();
        let ok = if tag == VariantTag::Base { n >= 1 } else { n == 0 };
        ensure(ok, || format!("{}: {n} violations", tag.cli_name()))?;
        for v in &ex.violations {
            c.traces.push(simkit::run(&adversary_config(&fids), tag.into(), &fids, &v.schedule).map_err(err)?);
        }
        counts.push(format!("{} {n} ({} terminal)", tag.cli_name(), ex.schedules_run));
    }
    Ok(format!("violations: {}", counts.join(", ")))
}

fn determinism(_: &mut Collected) -> Res {
    let dir = tempfile::tempdir().map_err(err)?;
    let invocations: [(&str, Vec<&str>); 4] = [
        ("run-fids", vec!["run", "--scenario", "fids", "--algorithm", "base", "--schedule", "builtin:fids"]),
        ("run-random", vec!["run", "--scenario", "rfids", "--algorithm", "no-ddap", "--schedule", "random:7"]),
        ("explore-random", vec!["explore", "--scenario", "rfids", "--algorithm", "base", "--mode", "random", "--max", "200", "--seed", "3"]),
        ("explore-exhaustive", vec!["explore", "--scenario", "fids", "--algorithm", "weak-ir", "--mode", "exhaustive"]),
    ];
    let mut files = 0;
    for (name, args) in &invocations {
        let mut outputs = Vec::new();
        let out = dir.path().join(format!("{name}.json"));
        for _ in 0..2 {
            let mut full = args.clone();
            full.extend(["--out", path_str(&out)]);
            let o = cli(&full)?;
            ensure(matches!(o.status.code(), Some(0 | 1)), || format!("{name}: {}", String::from_utf8_lossy(&o.stderr)))?;
            let mut bytes = vec![fs::read(&out).map_err(err)?, o.stdout];
            let mut meta = out.as_os_str().to_owned();
            meta.push(".meta.json");
            if let Ok(m) = fs::read(PathBuf::from(meta)) {
                bytes.push(m);
            }
            outputs.push(bytes);
        }
        ensure(outputs[0] == outputs[1], || format!("{name}: outputs differ"))?;
        files += outputs[0].len();
    }
    Ok(format!("{} invocations repeated, {files} outputs byte-identical", invocations.len()))
}

fn invariant_suite(c: &Collected) -> Res {
    ensure(c.traces.len() > 20, || format!("only {} traces collected", c.traces.len()))?;
    let mut failures = c.matrix_failures.clone();
    for t in &c.traces {
        let report = check_invariants(t).map_err(err)?;
        failures.extend(report.failures().iter().map(|f| format!("{}: {}: {}", t.scenario().name, f.name, f.details)));
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} traces plus the matrix runs, 0 violations", c.traces.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("FIDS reproduction", fids_reproduction),
        ("R-FIDS reproduction", rfids_reproduction),
        ("property matrix", property_matrix),
        ("fast-decision depths", fast_decision_depths),
        ("seamless-FT sweep", seamless_sweep),
        ("oracle cross-validation", oracle_agreement),
        ("exhaustive exploration", exhaustive_soundness),
        ("determinism", determinism),
    ];
    let mut collected = Collected::default();
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, start: Instant, res: Res| {
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {n} PASS {name} ({secs:.1}s): {detail}"),
            Err(reason) => {
                all_pass = false;
                println!("criterion {n} FAIL {name} ({secs:.1}s): {reason}");
            }
        }
    };
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = f(&mut collected);
        report(i + 1, name, start, res);
    }
    let start = Instant::now();
    let res = invariant_suite(&collected);
    report(9, "invariant suite", start, res);
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

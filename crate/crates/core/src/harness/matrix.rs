//! The variant × property matrix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adversary::{adversary_config, builtin_schedule};
use super::explore::{explore, ExploreError, ExploreMode, Granularity, DEFAULT_STATE_BUDGET};
use super::scenarios;
use crate::checkers::{
    check_dap, check_invariants, check_ddap, check_fast_decision, check_seamless_ft, check_strong_ir, check_trace_serializability, check_weak_ir,
    CheckError, Verdict, Witness,
};
use crate::protocols::{AlgorithmVariant, VariantTag};
use crate::simkit::{self, Schedule, SimConfig, SimError};
use crate::txmodel::{ExecutionTrace, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Column {
    Serializability,
    FastDecision,
    WeakIR,
    StrongIR,
    #[serde(rename = "DAP/DDAP")]
    DapDdap,
    #[serde(rename = "SeamlessFT(1)")]
    SeamlessFt1,
}

impl Column {
    pub const ALL: [Column; 6] =
        [Column::Serializability, Column::FastDecision, Column::WeakIR, Column::StrongIR, Column::DapDdap, Column::SeamlessFt1];

    pub fn title(self) -> &'static str {
        match self {
            Column::Serializability => "Serializability",
            Column::FastDecision => "FastDecision",
            Column::WeakIR => "WeakIR",
            Column::StrongIR => "StrongIR",
            Column::DapDdap => "DAP/DDAP",
            Column::SeamlessFt1 => "SeamlessFT(1)",
        }
    }
}

/// Everything needed to re-run the execution behind a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Replay {
    pub scenario: Scenario,
    pub algorithm: AlgorithmVariant,
    pub config: SimConfig,
    pub schedule: Schedule,
}

impl Replay {
    fn of(trace: &ExecutionTrace) -> Self {
        Self {
            scenario: trace.meta.scenario.clone(),
            algorithm: trace.meta.algorithm,
            config: trace.meta.config.clone(),
            schedule: trace.meta.schedule.clone(),
        }
    }

    pub fn run(&self) -> Result<ExecutionTrace, SimError> {
        simkit::run(&self.config, self.algorithm, &self.scenario, &self.schedule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Cell {
    pub column: Column,
    /// Property actually checked, e.g. `DDAP` in the DAP/DDAP column.
    pub property: String,
    pub pass: bool,
    pub expected: Option<bool>,
    pub details: String,
    pub witness: Option<Witness>,
    pub replay: Option<Replay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixRow {
    pub variant: VariantTag,
    pub cells: Vec<Cell>,
    pub dap: bool,
    pub ddap: bool,
    /// Number of traces the row generated and ran the invariant suite on.
    pub traces_checked: usize,
    /// Invariant violations found on those traces, as `scenario: invariant: details`.
    pub invariant_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixReport {
    pub rows: Vec<MatrixRow>,
    pub matches_expected: bool,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}

/// Expected verdicts per variant; `None` where no claim is made.
pub fn expected(tag: VariantTag, column: Column) -> Option<bool> {
    use Column::*;
    use VariantTag::*;
    match (tag, column) {
        (Base, Serializability) => Some(false),
        (_, Serializability) => Some(true),
        (NoFastDecision, FastDecision) => Some(false),
        (_, FastDecision) => Some(true),
        (WeakIrOnly, WeakIR) => Some(true),
        (_, WeakIR) => None,
        (WeakIrOnly, StrongIR) => Some(false),
        (_, StrongIR) => Some(true),
        (NoDdap, DapDdap) => Some(false),
        (_, DapDdap) => Some(true),
        (NoSeamlessFt, SeamlessFt1) => Some(false),
        (_, SeamlessFt1) => Some(true),
    }
}

fn sync_run(scenario: &Scenario, tag: VariantTag, schedule: &Schedule) -> Result<ExecutionTrace, SimError> {
    simkit::run(&SimConfig::for_scenario(scenario), tag.into(), scenario, schedule)
}

fn cell(column: Column, property: &str, tag: VariantTag, verdict: Verdict, replay: Option<Replay>) -> Cell {
    Cell {
        column,
        property: property.into(),
        pass: verdict.pass,
        expected: expected(tag, column),
        details: verdict.details,
        witness: if verdict.pass { None } else { verdict.witness },
        replay: if verdict.pass { None } else { replay },
    }
}

/// First failing verdict over `traces`, or the last passing one.
fn first_failure(
    traces: &[ExecutionTrace],
    check: impl Fn(&ExecutionTrace) -> Result<Verdict, CheckError>,
) -> Result<(Verdict, Option<Replay>), CheckError> {
    let mut last = None;
    for t in traces {
        let v = check(t)?;
        if !v.pass {
            return Ok((v, Some(Replay::of(t))));
        }
        last = Some(v);
    }
    Ok((last.expect("at least one trace"), None))
}

fn row(tag: VariantTag) -> Result<MatrixRow, MatrixError> {
    let alg: AlgorithmVariant = tag.into();
    let mut cells = Vec::new();

    // Serializability: both adversarial schedules, then exhaustive FIDS.
    let mut adversarial = Vec::new();
    for (name, s) in [("fids", scenarios::fids()), ("rfids", scenarios::rfids())] {
        let schedule = builtin_schedule(name, &s, alg).expect("builtin")?;
        adversarial.push(simkit::run(&adversary_config(&s), alg, &s, &schedule)?);
    }
    let (mut ser, mut replay) = first_failure(&adversarial, check_trace_serializability)?;
    if ser.pass {
        let fids = scenarios::fids();
        let ex = explore(&fids, alg, ExploreMode::Exhaustive { max_states: DEFAULT_STATE_BUDGET }, Granularity::TrivialBlocks)?;
        match ex.violations.into_iter().next() {
            Some(v) => {
                replay = Some(Replay { scenario: fids.clone(), algorithm: alg, config: adversary_config(&fids), schedule: v.schedule });
                ser = v.verdict;
            }
            None => {
                ser.details = format!(
                    "adversarial FIDS and R-FIDS runs serializable; exhaustive FIDS exploration: {} terminal states, 0 violations",
                    ex.schedules_run
                );
            }
        }
    }
    cells.push(cell(Column::Serializability, "Serializability", tag, ser, replay));

    // Fast decision on solo runs with 0..=3 reads.
    let solos: Vec<ExecutionTrace> =
        (0..=3).map(|r| sync_run(&scenarios::solo_reads(r), tag, &Schedule::Fair)).collect::<Result<_, _>>()?;
    let (fd, replay) = first_failure(&solos, check_fast_decision)?;
    cells.push(cell(Column::FastDecision, "FastDecision", tag, fd, replay));

    // Weak invisible reads on every trace generated so far plus a read-only solo run.
    let mut weak_traces = vec![sync_run(&scenarios::solo_read_only(), tag, &Schedule::Fair)?];
    weak_traces.extend(adversarial.iter().cloned());
    weak_traces.extend(solos.iter().cloned());
    let (wir, replay) = first_failure(&weak_traces, check_weak_ir)?;
    cells.push(cell(Column::WeakIR, "WeakIR", tag, wir, replay));

    // Strong invisible reads: writer with a non-empty read set.
    let probe = sync_run(&scenarios::strong_ir_probe(), tag, &Schedule::Fair)?;
    let (sir, replay) = first_failure(std::slice::from_ref(&probe), check_strong_ir)?;
    cells.push(cell(Column::StrongIR, "StrongIR", tag, sir, replay));

    // Contention between concurrent writers.
    let dap_trace = sync_run(&scenarios::dap_probe(), tag, &Schedule::FairConcurrent)?;
    let ddap_traces = vec![sync_run(&scenarios::ddap_probe(), tag, &Schedule::FairConcurrent)?, dap_trace.clone()];
    let (dap, dap_replay) = first_failure(std::slice::from_ref(&dap_trace), check_dap)?;
    let (ddap, ddap_replay) = first_failure(&ddap_traces, check_ddap)?;
    let (dap_pass, ddap_pass) = (dap.pass, ddap.pass);
    let contention = match tag {
        VariantTag::NoSeamlessFt => cell(Column::DapDdap, "DAP", tag, dap, dap_replay),
        VariantTag::NoDdap => {
            let mut c = if !ddap.pass { cell(Column::DapDdap, "DAP/DDAP", tag, ddap, ddap_replay) } else { cell(Column::DapDdap, "DAP/DDAP", tag, dap, dap_replay) };
            c.pass = dap_pass && ddap_pass;
            c.details = format!("DAP {}, DDAP {}; {}", verdict_word(dap_pass), verdict_word(ddap_pass), c.details);
            c
        }
        _ => cell(Column::DapDdap, "DDAP", tag, ddap, ddap_replay),
    };
    cells.push(contention);

    // One crash at every point of a replicated solo run.
    let solo = sync_run(&scenarios::seamless_probe(), tag, &Schedule::Fair)?;
    let sft = check_seamless_ft(&solo, 1)?;
    let replay = match &sft.witness {
        Some(Witness::CrashInjection { schedule, .. }) => {
            Some(Replay { schedule: schedule.clone(), ..Replay::of(&solo) })
        }
        _ => None,
    };
    cells.push(cell(Column::SeamlessFt1, "SeamlessFT(1)", tag, sft, replay));

    let mut all = adversarial;
    all.extend(weak_traces);
    all.extend([probe, dap_trace, solo]);
    all.extend(ddap_traces);
    let mut invariant_failures = Vec::new();
    for t in &all {
        for f in check_invariants(t)?.failures() {
            invariant_failures.push(format!("{}: {}: {}", t.scenario().name, f.name, f.details));
        }
    }
    Ok(MatrixRow { variant: tag, cells, dap: dap_pass, ddap: ddap_pass, traces_checked: all.len(), invariant_failures })
}

fn verdict_word(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

impl MatrixRow {
    pub fn cell(&self, column: Column) -> &Cell {
        self.cells.iter().find(|c| c.column == column).expect("every column is filled")
    }

    fn matches_expected(&self) -> bool {
        let cells_ok = self.cells.iter().all(|c| c.expected.is_none_or(|e| e == c.pass));
        // The no-DDAP row claims both contention properties fail.
        cells_ok && self.invariant_failures.is_empty() && (self.variant != VariantTag::NoDdap || (!self.dap && !self.ddap))
    }
}

pub fn build_matrix() -> Result<MatrixReport, MatrixError> {
    let rows = VariantTag::ALL.into_iter().map(row).collect::<Result<Vec<_>, _>>()?;
    let matches_expected = rows.iter().all(MatrixRow::matches_expected);
    Ok(MatrixReport { rows, matches_expected })
}

impl MatrixReport {
    pub fn row(&self, tag: VariantTag) -> &MatrixRow {
        self.rows.iter().find(|r| r.variant == tag).expect("every variant has a row")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Property matrix\n\n| Variant |");
        for c in Column::ALL {
            let _ = write!(md, " {} |", c.title());
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(Column::ALL.len()));
        md.push('\n');
        for r in &self.rows {
            let _ = write!(md, "| {} |", r.variant);
            for c in &r.cells {
                let mark = if c.expected.is_some_and(|e| e != c.pass) { " (unexpected)" } else { "" };
                let label = if c.column == Column::DapDdap { format!(" ({})", c.property) } else { String::new() };
                let _ = write!(md, " {}{label}{mark} |", verdict_word(c.pass));
            }
            md.push('\n');
        }
        let _ = writeln!(md, "\nMatches expected table: {}\n", if self.matches_expected { "yes" } else { "no" });
        for r in &self.rows {
            let _ = writeln!(md, "- {}: invariant suite on {} traces, {} violations", r.variant, r.traces_checked, r.invariant_failures.len());
            for f in &r.invariant_failures {
                let _ = writeln!(md, "  - {f}");
            }
        }
        md.push('\n');
        md.push_str("## Cells\n");
        for r in &self.rows {
            for c in &r.cells {
                let _ = writeln!(md, "\n### {} / {}: {}\n\n{}", r.variant, c.column.title(), verdict_word(c.pass), c.details);
                if let Some(w) = &c.witness {
                    let _ = writeln!(md, "\nWitness:\n\n```json\n{}\n```", serde_json::to_string(w).expect("witness serializes"));
                }
                if let Some(rp) = &c.replay {
                    let _ = writeln!(
                        md,
                        "\nReplay: scenario `{}`, {}, schedule:\n\n```json\n{}\n```",
                        rp.scenario.name,
                        rp.config.gst.map_or("asynchronous".to_string(), |g| format!("GST at tick {g}")),
                        serde_json::to_string(&rp.schedule).expect("schedule serializes")
                    );
                }
            }
        }
        md
    }
}

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pdts_lab::checkers::{self, CheckError, PropertyTag, Verdict};
use pdts_lab::harness::explore::{DEFAULT_RANDOM_RUNS, DEFAULT_STATE_BUDGET};
use pdts_lab::harness::{adversary_config, builtin_schedule, explore, matrix, scenarios, ExploreError, ExploreMode, Granularity};
use pdts_lab::protocols::VariantTag;
use pdts_lab::simkit::{self, Schedule, SimConfig};
use pdts_lab::txmodel::{ExecutionTrace, Scenario, TraceMeta};

#[derive(Parser)]
#[command(name = "pdts-lab", version, about = "Simulate and check distributed transactional protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario under a schedule and record the trace.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        algorithm: VariantTag,
        /// builtin:fids, builtin:rfids, random:SEED or a schedule JSON file.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check one property on a recorded trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        property: PropertyTag,
        /// Crash count for seamless-ft.
        #[arg(long, default_value_t = 1)]
        s: usize,
    },
    /// Search schedules for serializability violations.
    Explore {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        algorithm: VariantTag,
        #[arg(long, value_enum)]
        mode: Mode,
        /// State budget (exhaustive) or number of runs (random).
        #[arg(long)]
        max: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Grain::TrivialBlocks)]
        granularity: Grain,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the variant by property matrix.
    Matrix {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grain {
    Exact,
    TrivialBlocks,
}

/// Failure categories mapped onto exit codes.
enum Failure {
    Check(String),
    Usage(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn meta_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid JSON in {}: {e}", path.display())))
}

fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    if let Some(s) = scenarios::builtin(arg) {
        return Ok(s);
    }
    if arg.starts_with("builtin:") || !Path::new(arg).exists() {
        return Err(Failure::Usage(format!("unknown scenario {arg:?}; built-ins: {}", scenarios::BUILTIN_NAMES.join(", "))));
    }
    let scenario: Scenario = read_json(Path::new(arg))?;
    scenario.validate().map_err(Failure::usage)?;
    Ok(scenario)
}

fn resolve_schedule(arg: &str, scenario: &Scenario, algorithm: VariantTag) -> Result<(SimConfig, Schedule), Failure> {
    if arg.starts_with("builtin:") {
        let schedule = builtin_schedule(arg, scenario, algorithm.into())
            .ok_or_else(|| Failure::Usage(format!("unknown schedule {arg:?}; expected builtin:fids or builtin:rfids")))?
            .map_err(Failure::usage)?;
        return Ok((adversary_config(scenario), schedule));
    }
    if let Some(seed) = arg.strip_prefix("random:") {
        let seed: u64 = seed.parse().map_err(|_| Failure::Usage(format!("bad seed in {arg:?}")))?;
        let config = SimConfig { seed, ..SimConfig::for_scenario(scenario) };
        return Ok((config, Schedule::RandomSeeded { seed }));
    }
    let schedule: Schedule = read_json(Path::new(arg))?;
    let config = match schedule {
        Schedule::Scripted { .. } | Schedule::ExhaustiveCursor { .. } => adversary_config(scenario),
        _ => SimConfig::for_scenario(scenario),
    };
    Ok((config, schedule))
}

fn run(scenario: &str, algorithm: VariantTag, schedule: &str, out: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(scenario)?;
    let (config, schedule) = resolve_schedule(schedule, &scenario, algorithm)?;
    let trace = simkit::run(&config, algorithm.into(), &scenario, &schedule).map_err(Failure::usage)?;
    write(out, &trace.to_jsonl())?;
    write(&meta_path(out), &trace.meta_json())?;
    for (txn, result) in trace.invocations_and_responses() {
        match result {
            Some(r) => println!("respond {txn}: {:?}", r.outcome),
            None => println!("invoke {txn}"),
        }
    }
    println!("{} steps written to {}", trace.len(), out.display());
    Ok(())
}

fn load_trace(path: &Path) -> Result<ExecutionTrace, Failure> {
    let meta: TraceMeta = read_json(&meta_path(path))?;
    let file = fs::File::open(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    ExecutionTrace::read_jsonl(BufReader::new(file), meta).map_err(|e| Failure::Usage(format!("invalid trace {}: {e}", path.display())))
}

fn check_property(trace: &ExecutionTrace, property: PropertyTag, s: usize) -> Result<Verdict, CheckError> {
    match property {
        PropertyTag::Serializability => checkers::check_trace_serializability(trace),
        PropertyTag::WeakProgress => checkers::check_weak_progress(std::slice::from_ref(trace)),
        PropertyTag::WeakIR => checkers::check_weak_ir(trace),
        PropertyTag::StrongIR => checkers::check_strong_ir(trace),
        PropertyTag::DAP => checkers::check_dap(trace),
        PropertyTag::DDAP => checkers::check_ddap(trace),
        PropertyTag::FastDecision => checkers::check_fast_decision(trace),
        PropertyTag::SeamlessFT => checkers::check_seamless_ft(trace, s),
        PropertyTag::ReadDelay => checkers::check_read_delay(trace),
    }
}

fn check(path: &Path, property: PropertyTag, s: usize) -> Result<(), Failure> {
    let trace = load_trace(path)?;
    let verdict = check_property(&trace, property, s).map_err(Failure::usage)?;
    print!("{}", verdict.to_json());
    if verdict.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("{property} failed: {}", verdict.details)))
    }
}

#[allow(clippy::too_many_arguments)]
fn explore_cmd(scenario: &str, algorithm: VariantTag, mode: Mode, max: Option<usize>, seed: u64, grain: Grain, out: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(scenario)?;
    let mode = match mode {
        Mode::Exhaustive => ExploreMode::Exhaustive { max_states: max.unwrap_or(DEFAULT_STATE_BUDGET) },
        Mode::Random => ExploreMode::Random { runs: max.unwrap_or(DEFAULT_RANDOM_RUNS), seed },
    };
    let granularity = match grain {
        Grain::Exact => Granularity::Exact,
        Grain::TrivialBlocks => Granularity::TrivialBlocks,
    };
    let result = match explore(&scenario, algorithm.into(), mode, granularity) {
        Ok(r) => r,
        Err(ExploreError::BudgetExceeded(n)) => return Err(Failure::Usage(format!("state budget of {n} exceeded; raise --max"))),
        Err(e) => return Err(Failure::usage(e)),
    };
    write(out, &result.to_json())?;
    println!(
        "{} schedules, {} states, {} distinct histories, {} violations",
        result.schedules_run,
        result.states_visited,
        result.terminal_histories.len(),
        result.violations.len()
    );
    match result.violations.first() {
        None => Ok(()),
        Some(v) => {
            print!("{}", v.verdict.to_json());
            Err(Failure::Check(format!("{} serializability violations", result.violations.len())))
        }
    }
}

fn matrix_cmd(out: &Path, json: Option<&Path>) -> Result<(), Failure> {
    let report = matrix::build_matrix().map_err(Failure::usage)?;
    write(out, &report.to_markdown())?;
    if let Some(json) = json {
        write(json, &report.to_json())?;
    }
    for row in &report.rows {
        let cells: Vec<String> = row.cells.iter().map(|c| format!("{} {}", c.column.title(), if c.pass { "PASS" } else { "FAIL" })).collect();
        println!("{}: {}", row.variant, cells.join(", "));
    }
    if report.matches_expected {
        Ok(())
    } else {
        Err(Failure::Check("matrix differs from the expected table".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, algorithm, schedule, out } => run(&scenario, algorithm, &schedule, &out),
        Command::Check { trace, property, s } => check(&trace, property, s),
        Command::Explore { scenario, algorithm, mode, max, seed, granularity, out } => {
            explore_cmd(&scenario, algorithm, mode, max, seed, granularity, &out)
        }
        Command::Matrix { out, json } => matrix_cmd(&out, json.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

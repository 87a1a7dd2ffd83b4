use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vfgrasp::harness::{self, Mode, RunSpec};
use vfgrasp::scenario::{export_suite, parse_override};
use vfgrasp::sim::PlannerKind;

/// Reactive grasping simulator.
///
/// Exit codes: 0 success, 2 episode failure, 1 error.
#[derive(Parser)]
#[command(name = "vfgrasp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write traces plus summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Two-thread wall-clock mode instead of the deterministic loop.
        #[arg(long, conflicts_with = "deterministic")]
        realtime: bool,
        /// Single-threaded reproducible loop (the default for `run`).
        #[arg(long)]
        deterministic: bool,
    },
    /// Measure planning-tick wall time over repeated episodes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Keep repeating until this many ticks are timed.
        #[arg(long, default_value_t = 1000)]
        min_ticks: usize,
        /// Time the planner on the single-threaded loop instead of the
        /// two-thread wall-clock mode.
        #[arg(long)]
        deterministic: bool,
    },
    /// Success rates over the 5-object by 3-pose suite for both planners.
    Table1 {
        /// Directory of exported scenario files; built-in scenes otherwise.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Single-threaded reproducible loop (always used by `table1`).
        #[arg(long)]
        deterministic: bool,
    },
    /// Write the shipped scenario files into a directory.
    Export { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file, or `builtin:<name>`.
    scenario: String,
    #[arg(long)]
    planner: Option<PlannerKind>,
    /// Parameter override, e.g. `--set tracker.horizon=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn overrides(raw: &[String]) -> Result<Vec<(String, serde_json::Value)>> {
    raw.iter()
        .map(|s| parse_override(s).with_context(|| format!("bad override {s:?}")))
        .collect()
}

fn spec(common: Common, repetitions: usize, mode: Mode) -> Result<RunSpec> {
    Ok(RunSpec {
        scenario: common.scenario,
        planner: common.planner,
        overrides: overrides(&common.overrides)?,
        out_dir: common.out,
        repetitions,
        seed: common.seed,
        mode,
        jobs: common.jobs,
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// `Ok(true)` when everything succeeded.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            common,
            repetitions,
            realtime,
            deterministic: _,
        } => {
            let mode = if realtime {
                Mode::Realtime
            } else {
                Mode::Deterministic
            };
            let report = harness::run(&spec(common, repetitions, mode)?)?;
            for s in &report.episodes {
                eprintln!(
                    "{} [{}]: {:?}, terminal error {:.4} m, min clearance {:.4} m",
                    s.scene,
                    s.planner,
                    s.outcome,
                    s.terminal_error,
                    s.min_gamma.min(s.min_object)
                );
            }
            print_json(&report)?;
            Ok(report.all_succeeded())
        }
        Command::Bench {
            common,
            repetitions,
            min_ticks,
            deterministic,
        } => {
            let mode = if deterministic {
                Mode::Deterministic
            } else {
                Mode::Realtime
            };
            let report = harness::bench(&spec(common, repetitions, mode)?, min_ticks)?;
            eprintln!(
                "{} [{}]: {} ticks, mean {:.2} ms, p95 {:.2} ms",
                report.scene, report.planner, report.ticks, report.mean_ms, report.p95_ms
            );
            print_json(&report)?;
            Ok(true)
        }
        Command::Table1 {
            suite,
            overrides: raw,
            out,
            jobs,
            deterministic: _,
        } => {
            let mut s = RunSpec::new(String::new());
            s.overrides = overrides(&raw)?;
            s.out_dir = out;
            s.jobs = jobs;
            let table = harness::table1(suite.as_deref(), &s)?;
            print!("{}", table.to_markdown());
            Ok(table
                .rows
                .iter()
                .all(|r| r.ours_successes == r.episodes_per_planner))
        }
        Command::Export { dir } => {
            for p in export_suite(&dir)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

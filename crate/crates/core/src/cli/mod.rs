// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when the input is rejected or a run fails,
//! 2 on usage errors. Diagnostics go to stderr; data goes to files or
//! stdout. Verbosity is read from `TENANTSIM_LOG`.

mod gantt;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use gantt::{render_gantt, GanttError};

use crate::engine::{compare, execute, execute_both, Fidelity, RunConfig, DEFAULT_FUNCTIONAL_CAP};
use crate::pe_array::{ArrayConfig, FeedModel};
use crate::scheduler::{Mode, Trace};
use crate::workload::{load_workload, validate_workload, WorkloadError};

#[derive(Debug, Parser)]
#[command(name = "tenantsim", version, about = "Multi-tenant systolic array simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a workload in one scheduling mode.
    Run(RunArgs),
    /// Simulate baseline and partitioned modes and report the difference.
    Compare(SimArgs),
    /// Check a workload file.
    Validate {
        #[arg(long)]
        workload: PathBuf,
    },
    /// Render a trace file as an SVG timeline.
    Gantt {
        #[arg(long)]
        trace: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value_t = 128)]
    rows: usize,
    #[arg(long, default_value_t = 128)]
    cols: usize,
    #[arg(long, default_value_t = Fidelity::Analytical)]
    fidelity: Fidelity,
    #[arg(long = "feed-model", default_value_t = FeedModel::Independent)]
    feed_model: FeedModel,
    /// Energy table JSON; the bundled illustrative table if omitted.
    #[arg(long = "energy-table")]
    energy_table: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace output (`.csv` for a per-layer table, JSON otherwise). In
    /// `compare`, the partitioned trace.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output (`.csv` or JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// SVG timeline output. In `compare`, of the partitioned run.
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = Mode::Partitioned)]
    mode: Mode,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("TENANTSIM_LOG").write_style("TENANTSIM_LOG_STYLE"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::Validate { workload } => validate(&workload),
        Command::Run(args) => run(&args.sim, args.mode),
        Command::Compare(args) => compare_modes(&args),
        Command::Gantt { trace, out } => {
            let text = fs::read_to_string(&trace).map_err(|e| format!("cannot read {}: {e}", trace.display()))?;
            let trace = Trace::from_json(&text).map_err(|e| format!("{}: {e}", trace.display()))?;
            let svg = render_gantt(&trace).map_err(|e| e.to_string())?;
            match out {
                Some(path) => write_file(&path, svg.as_bytes()),
                None => std::io::stdout().write_all(svg.as_bytes()).map_err(|e| e.to_string()),
            }
        }
    }
}

fn validate(path: &Path) -> Result<(), String> {
    let w = load_workload(path).map_err(|e| describe(path, e))?;
    println!("{}: {} DNNs, {} layers", path.display(), w.dnns.len(), w.layer_count());
    Ok(())
}

fn describe(path: &Path, e: WorkloadError) -> String {
    format!("{}: {e}", path.display())
}

fn config(args: &SimArgs, mode: Mode) -> RunConfig {
    RunConfig {
        array: ArrayConfig::new(args.rows, args.cols, args.feed_model),
        mode,
        fidelity: args.fidelity,
        energy_table: args.energy_table.clone(),
        seed: args.seed,
        functional_cap: DEFAULT_FUNCTIONAL_CAP,
    }
}

fn load(args: &SimArgs) -> Result<crate::workload::Workload, String> {
    let w = load_workload(&args.workload).map_err(|e| describe(&args.workload, e))?;
    validate_workload(w).map_err(|e| format!("{}: {e}", args.workload.display()))
}

#[derive(Serialize)]
struct RunSummary {
    mode: Mode,
    fidelity: Fidelity,
    makespan: u64,
    energy_pj: String,
    utilization: f64,
}

fn run(args: &SimArgs, mode: Mode) -> Result<(), String> {
    let w = load(args)?;
    let out = execute(&config(args, mode), &w).map_err(|e| e.to_string())?;
    write_trace(args, &out.trace)?;
    if let Some(path) = &args.report {
        if is_csv(path) {
            let mut buf = Vec::new();
            out.energy.write_csv(&mut buf).map_err(|e| e.to_string())?;
            write_file(path, &buf)?;
        } else {
            write_file(path, to_json(&out.energy).as_bytes())?;
        }
    }
    let summary = RunSummary {
        mode,
        fidelity: out.fidelity,
        makespan: out.trace.makespan,
        energy_pj: out.energy.total.to_string(),
        utilization: out.utilization(),
    };
    println!("{}", to_json(&summary));
    Ok(())
}

fn compare_modes(args: &SimArgs) -> Result<(), String> {
    let w = load(args)?;
    let (b, p) = execute_both(&config(args, Mode::Partitioned), &w).map_err(|e| e.to_string())?;
    let report = compare(&b, &p).map_err(|e| e.to_string())?;
    write_trace(args, &p.trace)?;
    if let Some(path) = &args.report {
        if is_csv(path) {
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(|e| e.to_string())?;
            write_file(path, &buf)?;
        } else {
            write_file(path, to_json(&report).as_bytes())?;
        }
    }
    println!("{}", to_json(&report));
    Ok(())
}

fn write_trace(args: &SimArgs, trace: &Trace) -> Result<(), String> {
    if let Some(path) = &args.out {
        if is_csv(path) {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf).map_err(|e| e.to_string())?;
            write_file(path, &buf)?;
        } else {
            write_file(path, trace.to_json().as_bytes())?;
        }
    }
    if let Some(path) = &args.gantt {
        let svg = render_gantt(trace).map_err(|e| e.to_string())?;
        write_file(path, svg.as_bytes())?;
    }
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

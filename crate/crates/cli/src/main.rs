//! `poseguard`: head-pose event detection, evaluation and review from the command line.

mod commands;
mod failure;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poseguard_core::detector::{DetectorParams, WindowUnit};
use poseguard_core::eval::{DEFAULT_N_GRID, DEFAULT_TARGET_LABEL, DEFAULT_W_GRID};
use poseguard_core::session::ValidationConfig;
use poseguard_core::stats::DEFAULT_WINDOW_S;

use failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "poseguard",
    version,
    about = "Flag head-pose events in learning sessions and evaluate them"
)]
struct Cli {
    /// Worker threads for multi-session work [default: available cores]
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect events in one session; writes events.csv and detection.json
    Detect(DetectArgs),
    /// Evaluate an (n, w) grid over sessions; writes sweep.csv and sweep_meta.json
    Sweep(SweepArgs),
    /// Biometric before/during/after tests; writes study_report.json and summary_table.csv
    Stats(StatsArgs),
    /// Generate synthetic sessions from a JSON config
    Synth(SynthArgs),
    /// Report stream coverage and the exclusion decision for one session
    Validate(ValidateArgs),
    /// Run the review HTTP service over a corpus directory
    Serve(ServeArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1], got {s:?}")),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Unit {
    Frames,
    Seconds,
}

impl From<Unit> for WindowUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Frames => WindowUnit::Frames,
            Unit::Seconds => WindowUnit::Seconds,
        }
    }
}

#[derive(Args, Debug)]
struct WindowArgs {
    /// Unit of the window length
    #[arg(long, value_enum, default_value_t = Unit::Frames)]
    window_unit: Unit,
    /// Frames between consecutive window starts
    #[arg(long, default_value_t = DetectorParams::default().stride, value_parser = clap::value_parser!(u32).range(1..))]
    stride: u32,
    /// Minimum fraction of valid frames for a window to be flagged
    #[arg(long, default_value_t = DetectorParams::default().min_window_coverage, value_parser = unit_fraction)]
    min_coverage: f64,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Session manifest (session.json)
    manifest: PathBuf,
    /// Threshold multiplier on the session standard deviation
    #[arg(long, default_value_t = DetectorParams::default().n, value_parser = positive_f64, allow_negative_numbers = true)]
    n: f64,
    /// Window length
    #[arg(long, default_value_t = DetectorParams::default().w, value_parser = clap::value_parser!(u32).range(1..), allow_negative_numbers = true)]
    w: u32,
    #[command(flatten)]
    window: WindowArgs,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Session manifests, or directories whose subdirectories hold session.json
    inputs: Vec<PathBuf>,
    /// Comma-separated n values
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_GRID.to_vec(), value_parser = positive_f64, allow_negative_numbers = true)]
    n_grid: Vec<f64>,
    /// Comma-separated window lengths
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_W_GRID.to_vec(), value_parser = clap::value_parser!(u32).range(1..))]
    w_grid: Vec<u32>,
    /// Ground-truth label to score against
    #[arg(long, default_value = DEFAULT_TARGET_LABEL)]
    label: String,
    #[command(flatten)]
    window: WindowArgs,
    /// Minimum overlap (seconds) for a truth interval to count as detected
    #[arg(long, default_value_t = 0.0)]
    min_overlap: f64,
    /// Credit each predicted event to at most one truth interval
    #[arg(long)]
    one_to_one: bool,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AggregationArg {
    PerEvent,
    PerLearner,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CohortArg {
    All,
    Female,
    Male,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Session manifests, or directories whose subdirectories hold session.json
    inputs: Vec<PathBuf>,
    /// Label of the events to analyse
    #[arg(long, default_value = DEFAULT_TARGET_LABEL)]
    label: String,
    /// Length of the before and after windows in seconds
    #[arg(long, default_value_t = DEFAULT_WINDOW_S, value_parser = positive_f64)]
    window: f64,
    /// Unit of observation for the tests
    #[arg(long, value_enum, default_value_t = AggregationArg::PerEvent)]
    aggregation: AggregationArg,
    /// Use Welch's unequal-variance test instead of the paired test
    #[arg(long)]
    welch: bool,
    /// Cohorts to report
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![CohortArg::All, CohortArg::Female, CohortArg::Male])]
    cohorts: Vec<CohortArg>,
    /// Signal loss (seconds) above which a session is excluded
    #[arg(long, default_value_t = ValidationConfig::default().loss_threshold_s, value_parser = positive_f64)]
    loss_threshold: f64,
    /// Keep sessions regardless of signal loss
    #[arg(long)]
    no_exclusion: bool,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator config: one session, or {"corpus": {...}}
    config: PathBuf,
    /// Sessions are written to <out-dir>/<session_id>/
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Session manifest (session.json)
    manifest: PathBuf,
    /// Signal loss (seconds) above which the session is excluded
    #[arg(long, default_value_t = ValidationConfig::default().loss_threshold_s, value_parser = positive_f64)]
    loss_threshold: f64,
    /// Expected biometric sampling period in seconds
    #[arg(long, default_value_t = ValidationConfig::default().nominal_period_s, value_parser = positive_f64)]
    nominal_period: f64,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Directory holding session subdirectories
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Port to listen on; 0 picks a free port
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Decisions log [default: <corpus-dir>/decisions.jsonl]
    #[arg(long)]
    decisions_log: Option<PathBuf>,
    /// Static review UI bundle to serve at /
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("POSEGUARD_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = cli
        .jobs
        .map(|j| j as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::internal(format!("cannot start worker pool: {e}")))?;
    match cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Stats(a) => commands::stats(a),
        Command::Synth(a) => commands::synth(a),
        Command::Validate(a) => commands::validate(a),
        Command::Serve(a) => commands::serve(a, jobs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::usage("usage", e.render().to_string().trim_end()).report(),
    };
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

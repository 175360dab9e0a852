//! `rehab`: synthetic data, training, evaluation, actuator simulation and
//! session running/serving for the sEMG-driven rehabilitation glove.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rehab_core::actuator::ActuatorVersion;
use rehab_core::Gesture;

pub const EXIT_IO: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_MODEL: u8 = 5;
pub const EXIT_ACTUATOR: u8 = 6;
pub const EXIT_SESSION: u8 = 7;
pub const EXIT_SERVICE: u8 = 8;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value)
  3  file could not be read or written
  4  invalid input data (CSV, protocol or log content)
  5  classifier error (training, model file, evaluation)
  6  actuator error (pressure out of range, invalid spec)
  7  session error
  8  service error";

#[derive(Debug, Parser)]
#[command(name = "rehab", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic rectified sEMG recording as CSV.
    Gen(GenArgs),
    /// Train a KNN model from labelled recordings.
    Train(TrainArgs),
    /// Evaluate a model on labelled recordings.
    Eval(EvalArgs),
    /// Simulate an actuator at a pressure and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Run a complete session offline and write its event log.
    Run(RunArgs),
    /// Serve a session or a recorded log over TCP.
    Serve(ServeArgs),
    /// Print the events of a session log as JSON lines.
    Replay(ReplayArgs),
}

/// `label=path` pair.
#[derive(Debug, Clone)]
pub struct LabeledPath {
    pub label: Gesture,
    pub path: PathBuf,
}

impl FromStr for LabeledPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, path) = s
            .split_once('=')
            .ok_or_else(|| format!("expected LABEL=PATH, got `{s}`"))?;
        Ok(Self {
            label: label.parse().map_err(|e| format!("{e}"))?,
            path: PathBuf::from(path),
        })
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: Gesture,
    #[arg(long, default_value_t = 34)]
    pub count: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled recording, e.g. `grasp=grasp.csv`. Repeatable.
    #[arg(long = "data", required = true, value_name = "LABEL=PATH")]
    pub data: Vec<LabeledPath>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Standardise features with training-set statistics.
    #[arg(long)]
    pub scaler: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled recording, e.g. `release=val.csv`. Repeatable.
    #[arg(long = "data", required = true, value_name = "LABEL=PATH")]
    pub data: Vec<LabeledPath>,
    /// Comma-separated k values; defaults to the model's k.
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Vec<usize>,
    /// Also write the reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "v2")]
    pub version: ActuatorVersion,
    /// Defaults to the version's longest characterised chain.
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub pressure: f64,
    /// Actuator config file; overrides --version and --segments.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write spec, pressure and full state as a JSON fixture.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SessionSourceArgs {
    /// Protocol file; the default alternating protocol when omitted.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Model file; trained on the built-in synthetic corpus when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Recorded signal CSV; a scripted synthetic user when omitted.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Seed of the synthetic source and the fallback model.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SessionSourceArgs,
    /// Event log output (JSON lines).
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: SessionSourceArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Serve this recorded log instead of a live session.
    #[arg(long, conflicts_with_all = ["source", "model", "protocol"])]
    pub replay: Option<PathBuf>,
    /// Write each live session's log here when it ends.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Session seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Ignore pacing and run as fast as possible.
    #[arg(long)]
    pub fast: bool,
    #[arg(long)]
    pub autostart: bool,
    /// Exit once the first session has ended.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Emit immediately instead of at recorded times.
    #[arg(long)]
    pub fast: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Run(a) => commands::run(a),
        Command::Serve(a) => commands::serve(a),
        Command::Replay(a) => commands::replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

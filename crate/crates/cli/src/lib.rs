//! `fastedi` command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 a measured threshold was not met (`bench`, `stream-sim`).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub mod commands;
pub mod report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] fastedi::Error),
    /// The command ran to completion but missed a configured threshold; the
    /// report is still emitted.
    #[error("threshold not met: {message}")]
    Threshold { message: String, report: serde_json::Value },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Threshold { .. } => EXIT_THRESHOLD,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fastedi", version, about = "Real-time event-based motion deblurring")]
pub struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth(commands::synth::SynthArgs),
    /// Deblur every frame of a dataset.
    Deblur(commands::deblur::DeblurArgs),
    /// Deblur one frame and render latent frames at later timestamps.
    Reconstruct(commands::reconstruct::ReconstructArgs),
    /// Measure events per second of both engines.
    Bench(commands::bench::BenchArgs),
    /// Replay a dataset in real time through a bounded queue.
    StreamSim(commands::stream_sim::StreamSimArgs),
    /// Contrast thresholds from DVS bias settings.
    Contrast(commands::contrast::ContrastArgs),
}

/// Runs a command and returns its JSON report.
pub fn execute(cli: &Cli) -> CliResult<serde_json::Value> {
    match &cli.command {
        Command::Synth(a) => to_value(commands::synth::run(a)?),
        Command::Deblur(a) => to_value(commands::deblur::run(a)?),
        Command::Reconstruct(a) => to_value(commands::reconstruct::run(a)?),
        Command::Bench(a) => commands::bench::run(a),
        Command::StreamSim(a) => commands::stream_sim::run(a),
        Command::Contrast(a) => to_value(commands::contrast::run(a)?),
    }
}

fn to_value<T: Serialize>(v: T) -> CliResult<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Usage(format!("report serialization failed: {e}")))
}

fn emit(cli: &Cli, report: &serde_json::Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("json value serializes") + "\n";
    match &cli.out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

/// Parses `args`, runs the command, prints the report and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (report, code) = match execute(&cli) {
        Ok(report) => (Some(report), EXIT_OK),
        Err(CliError::Threshold { message, report }) => {
            eprintln!("fastedi: threshold not met: {message}");
            (Some(report), EXIT_THRESHOLD)
        }
        Err(e) => {
            eprintln!("fastedi: {e}");
            (None, e.exit_code())
        }
    };
    if let Some(report) = report {
        if let Err(e) = emit(&cli, &report) {
            eprintln!("fastedi: cannot write report: {e}");
            return EXIT_DATA;
        }
    }
    code
}

//! Implementation of the `blockcorr` binary.
//!
//! The executable in `main.rs` is a thin shell; everything testable lives
//! here. Commands emit either a JSON document (`test`, `params`,
//! `simulate`) or a plain-text table (`density`), and every failure is
//! classified as an I/O fault (exit 1) or a validation fault (exit 2).
//! Argument misuse is reported by clap, which also exits 2.

pub mod args;
pub mod commands;
pub mod document;
pub mod ingest;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// Name of the environment variable that caps the rayon worker count.
pub const THREADS_ENV: &str = "BLOCKCORR_THREADS";

/// Failure classes, mapped one-to-one onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// The file system failed underneath us: exit code 1.
    Io(String),
    /// Inputs were readable but unusable: bad dimensions, statistical
    /// regime violations, malformed values, schema errors. Exit code 2.
    Invalid(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(msg) | CliError::Invalid(msg) => f.write_str(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        // Only genuine device faults count as I/O; malformed content
        // (ragged rows, bad UTF-8) is a validation failure.
        if matches!(err.kind(), csv::ErrorKind::Io(_)) {
            CliError::Io(err.to_string())
        } else {
            CliError::Invalid(err.to_string())
        }
    }
}

impl From<blockcorr::blocks::BlockError> for CliError {
    fn from(err: blockcorr::blocks::BlockError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<blockcorr::asymptotics::AsymptoticsError> for CliError {
    fn from(err: blockcorr::asymptotics::AsymptoticsError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<blockcorr::freeconv::FreeconvError> for CliError {
    fn from(err: blockcorr::freeconv::FreeconvError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<blockcorr::sim::SimError> for CliError {
    fn from(err: blockcorr::sim::SimError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

/// Parse arguments, honor the thread override, dispatch, map exit codes.
pub fn run() -> ExitCode {
    let cli = args::Cli::parse();
    let outcome = configure_threads().and_then(|_| match &cli.command {
        args::Command::Test(a) => commands::cmd_test(a),
        args::Command::Params(a) => commands::cmd_params(a),
        args::Command::Density(a) => commands::cmd_density(a),
        args::Command::Simulate(a) => commands::cmd_simulate(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// Apply `BLOCKCORR_THREADS` to the global rayon pool before any parallel
/// work starts. Unset means rayon's default (one worker per core).
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        CliError::Invalid(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    if threads == 0 {
        return Err(CliError::Invalid(format!(
            "{THREADS_ENV} must be a positive integer, got `{raw}`"
        )));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|err| CliError::Invalid(format!("thread pool setup failed: {err}")))
}

//! `predecode` command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or input errors, 3 when a run
//! detects an internal invariant violation, 1 for anything else.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::output::Context;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PREDECODE_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "predecode", version, about = "Pre-decoding and matching experiments on the rotated toric code")]
pub struct Cli {
    /// Master seed; trial `i` always draws from stream `i` of this seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    /// Output file; standard output when absent. A `<out>.meta.json`
    /// sidecar records wall-clock metadata.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Logical failure probability by direct Monte Carlo over d and p.
    Threshold(commands::ThresholdArgs),
    /// Defect density from the growth of the mean defect count with volume.
    Density(commands::DensityArgs),
    /// Histogram of defect counts with a Poisson comparison.
    Histogram(commands::HistogramArgs),
    /// Matcher wall time against spacetime volume.
    Runtime(commands::RuntimeArgs),
    /// Failure probabilities below the direct sampling range by splitting.
    RareEvent(commands::RareEventArgs),
    /// Model evaluation: required distance, densities, speedups.
    Analysis(commands::AnalysisArgs),
    /// Compress or decompress syndrome files.
    Codec(commands::CodecArgs),
}

/// Error classes that map onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<predecode::Error> for CliError {
    fn from(e: predecode::Error) -> Self {
        use predecode::Error as E;
        match e {
            E::InvariantViolation(msg) => CliError::Invariant(msg),
            E::InvalidDistance(_)
            | E::InvalidParameter(_)
            | E::AddressOutOfRange { .. }
            | E::OddDefectCount(_)
            | E::TooManyDefects(_)
            | E::LatticeTooSmall { .. }
            | E::Codec(_) => CliError::Usage(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<predecode::CodecError> for CliError {
    fn from(e: predecode::CodecError) -> Self {
        match e {
            predecode::CodecError::Io(msg) => CliError::Other(anyhow::anyhow!(msg)),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(anyhow::Error::from)?;
    let ctx = Context::new(&cli, pool.current_num_threads());
    pool.install(|| commands::dispatch(&cli.command, &ctx))
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .map(|io| io.kind())
            .or_else(|| cause.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()))
            .or_else(|| match cause.downcast_ref::<csv::Error>().map(|c| c.kind()) {
                Some(csv::ErrorKind::Io(io)) => Some(io.kind()),
                _ => None,
            })
            == Some(std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`| head`) is not a failure.
        Err(CliError::Other(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

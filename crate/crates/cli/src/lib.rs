//! Command-line front end: config resolution, dispatch and canonical reports.
//!
//! Exit codes: `0` on success (including zero-capacity regimes), `1` when a
//! solver precondition or the model itself is rejected, `2` on usage errors.

pub mod commands;
pub mod config;
pub mod emit;

use std::io::Write;

use thiserror::Error;

pub use commands::{run, Report};
pub use config::{parse_config, Command, Format, RunConfig, SweepParam, Units};
pub use emit::{canonical_json, format_g12};

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
    /// Help or version text; not a failure.
    #[error("{0}")]
    Info(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Solver(_) | CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

/// Serializes a report in the requested format.
pub fn emit_report(report: &Report, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => Ok(canonical_json(&report.json).into_bytes()),
        Format::Csv => report
            .csv
            .clone()
            .map(String::into_bytes)
            .ok_or_else(|| CliError::Usage("CSV output is only available for sweep".into())),
    }
}

/// The resolved configuration as sorted-key JSON; feeding it back through
/// `--config` reproduces the same [`RunConfig`].
pub fn dump_config(config: &RunConfig) -> Result<Vec<u8>, CliError> {
    let value = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn write_out(config: &RunConfig, bytes: &[u8]) -> Result<(), CliError> {
    match &config.output {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Full pipeline for an argument list; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_config(args).and_then(|(config, dump)| {
        let bytes = if dump {
            dump_config(&config)?
        } else {
            emit_report(&run(&config)?, config.format)?
        };
        write_out(&config, &bytes)
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Info(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("dirinfo: {e}");
            e.exit_code()
        }
    }
}

/// Applies `DIRINFO_THREADS` to the global thread pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("DIRINFO_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(e.to_string()))
}

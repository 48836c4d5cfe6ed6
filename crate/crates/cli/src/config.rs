//! Command-line flags, optional JSON config file, and their merge.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Validate a model and report stabilizability/detectability.
    Check,
    /// Finite-horizon capacity by dynamic programming.
    Ftfi,
    /// Infinite-horizon feedback capacity.
    Capacity,
    /// Capacity without feedback (requires Q = 0).
    Nofeedback,
    /// Monte Carlo of the optimal stationary strategy.
    Simulate,
    /// Capacity over a grid of κ or C values.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Kappa,
    #[serde(rename = "C")]
    #[value(name = "C", alias = "c")]
    C,
}

pub const DEFAULT_STEPS: usize = 100_000;
pub const DEFAULT_SEEDS: usize = 8;
pub const DEFAULT_RATE_EPSILON: f64 = 0.02;
pub const DEFAULT_COST_EPSILON: f64 = 0.45;

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub model: PathBuf,
    pub kappa: Option<f64>,
    pub horizon: Option<usize>,
    /// Fixed multiplier; skips the budget search.
    pub s: Option<f64>,
    pub steps: usize,
    pub seeds: usize,
    pub first_seed: u64,
    pub rate_epsilon: f64,
    pub cost_epsilon: f64,
    pub units: Units,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub param: Option<SweepParam>,
    pub values: Vec<f64>,
}

/// Config-file layer: every key optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLayer {
    command: Option<Command>,
    model: Option<PathBuf>,
    kappa: Option<f64>,
    horizon: Option<usize>,
    s: Option<f64>,
    steps: Option<usize>,
    seeds: Option<usize>,
    first_seed: Option<u64>,
    rate_epsilon: Option<f64>,
    cost_epsilon: Option<f64>,
    units: Option<Units>,
    format: Option<Format>,
    output: Option<PathBuf>,
    trace: Option<PathBuf>,
    param: Option<SweepParam>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Parser)]
#[command(name = "dirinfo", version, about = "Feedback capacity of Gaussian linear channels with memory")]
pub struct Flags {
    /// What to run.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the power budget κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Override the horizon n (time steps 0..=n).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Solve at a fixed Lagrange multiplier instead of matching κ.
    #[arg(long)]
    pub s: Option<f64>,
    /// Simulation length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of simulated traces.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Seed of the first trace; the rest follow consecutively.
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Allowed deviation of the time-averaged information density (nats).
    #[arg(long)]
    pub rate_epsilon: Option<f64>,
    /// Allowed deviation of the time-averaged cost.
    #[arg(long)]
    pub cost_epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Report destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the first simulated trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Sweep parameter.
    #[arg(long, value_enum)]
    pub param: Option<SweepParam>,
    /// Comma-separated sweep grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub values: Option<Vec<f64>>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
}

fn read_layer(path: &Path) -> Result<FileLayer, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Merges flags over the config file over defaults and checks the result.
pub fn resolve(flags: &Flags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(p) => read_layer(p)?,
        None => FileLayer::default(),
    };
    let command = flags
        .command
        .or(file.command)
        .ok_or_else(|| CliError::Usage("a command is required".into()))?;
    let model = flags
        .model
        .clone()
        .or(file.model)
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let config = RunConfig {
        command,
        model,
        kappa: flags.kappa.or(file.kappa),
        horizon: flags.horizon.or(file.horizon),
        s: flags.s.or(file.s),
        steps: flags.steps.or(file.steps).unwrap_or(DEFAULT_STEPS),
        seeds: flags.seeds.or(file.seeds).unwrap_or(DEFAULT_SEEDS),
        first_seed: flags.first_seed.or(file.first_seed).unwrap_or(0),
        rate_epsilon: flags.rate_epsilon.or(file.rate_epsilon).unwrap_or(DEFAULT_RATE_EPSILON),
        cost_epsilon: flags.cost_epsilon.or(file.cost_epsilon).unwrap_or(DEFAULT_COST_EPSILON),
        units: flags.units.or(file.units).unwrap_or_default(),
        format: flags.format.or(file.format).unwrap_or_default(),
        output: flags.output.clone().or(file.output),
        trace: flags.trace.clone().or(file.trace),
        param: flags.param.or(file.param),
        values: flags.values.clone().or(file.values).unwrap_or_default(),
    };
    check(&config)?;
    Ok(config)
}

fn check(c: &RunConfig) -> Result<(), CliError> {
    let usage = |m: &str| Err(CliError::Usage(m.into()));
    if c.kappa.is_some_and(|k| !(k.is_finite() && k >= 0.0)) {
        return usage("--kappa must be a finite nonnegative number");
    }
    if c.s.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
        return usage("--s must be positive and finite");
    }
    if c.steps == 0 || c.seeds == 0 {
        return usage("--steps and --seeds must be at least 1");
    }
    if c.rate_epsilon.is_nan() || c.rate_epsilon <= 0.0 || c.cost_epsilon.is_nan() || c.cost_epsilon <= 0.0 {
        return usage("epsilons must be positive");
    }
    let sweep = c.command == Command::Sweep;
    if c.format == Format::Csv && !sweep {
        return usage("--format csv is only available for sweep");
    }
    if sweep {
        if c.param.is_none() || c.values.is_empty() {
            return usage("sweep needs --param and --values");
        }
        if c.s.is_some() {
            return usage("--s conflicts with sweep");
        }
    } else if c.param.is_some() || !c.values.is_empty() {
        return usage("--param/--values only apply to sweep");
    }
    if c.trace.is_some() && c.command != Command::Simulate {
        return usage("--trace only applies to simulate");
    }
    if c.s.is_some() && !matches!(c.command, Command::Ftfi | Command::Capacity | Command::Simulate) {
        return usage("--s applies to ftfi, capacity and simulate");
    }
    if c.values.iter().any(|v| !v.is_finite()) {
        return usage("sweep values must be finite");
    }
    Ok(())
}

/// Parses an argument list (including the program name).
pub fn parse_config<I, T>(args: I) -> Result<(RunConfig, bool), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = Flags::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    Ok((resolve(&flags)?, flags.dump_config))
}

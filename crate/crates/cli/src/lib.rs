//! Configuration-driven experiment runner for `spm-core`.
//!
//! Exit statuses: 0 success, 1 I/O or internal failure, 2 configuration
//! error, 3 numerical failure, 4 suite assertion failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod fields;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::commands::Outcome;
use crate::config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SUITE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) | CliError::Internal(_) => EXIT_IO,
        }
    }
}

impl From<spm_core::Error> for CliError {
    fn from(e: spm_core::Error) -> Self {
        use spm_core::Error as E;
        match e {
            E::NewtonDivergence { .. } | E::SingularSystem { .. } | E::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            E::Serialization(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "spm", version, about = "Stochastic porous medium laboratory")]
pub struct Cli {
    /// JSON configuration file; omitted sections take built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry by dotted path, e.g. `solver.epsilon=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Upper bound on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One path of the regularised equation.
    Simulate,
    /// The controlled deterministic flow towards its equilibrium.
    Deterministic,
    /// The equilibrium of the controlled flow for the configured forcing.
    FixedPoint,
    /// Pathwise contraction of coupled paths.
    Contraction,
    /// Time spent near the L∞ ball.
    Occupation,
    /// Probability of reaching the equilibrium neighbourhood.
    Accessibility,
    /// Time-averaged mass near the equilibrium.
    LowerBound,
    /// Equicontinuity probe of the transition semigroup.
    EProperty,
    /// Long-run averages from several starting points.
    Invariant,
    /// Probability of the noise tube event.
    Tube,
    /// Check the configuration and exit.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Deterministic => "deterministic",
            Command::FixedPoint => "fixed-point",
            Command::Contraction => "contraction",
            Command::Occupation => "occupation",
            Command::Accessibility => "accessibility",
            Command::LowerBound => "lower-bound",
            Command::EProperty => "e-property",
            Command::Invariant => "invariant",
            Command::Tube => "tube",
            Command::Validate => "validate",
        }
    }

    fn from_name(name: &str) -> Option<Command> {
        ALL.iter().copied().find(|c| c.name() == name)
    }
}

const ALL: [Command; 11] = [
    Command::Simulate,
    Command::Deterministic,
    Command::FixedPoint,
    Command::Contraction,
    Command::Occupation,
    Command::Accessibility,
    Command::LowerBound,
    Command::EProperty,
    Command::Invariant,
    Command::Tube,
    Command::Validate,
];

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses, runs, and reports; returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("spm {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    let mut config = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(dir) = &cli.output {
        config.output_dir = dir.clone();
    }
    let workers = cli.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let resolved = config.resolve()?;

    if cli.command == Command::Validate {
        // also check the parameters of the suite named by the experiment
        if let Some(target) = Command::from_name(&resolved.config.experiment.name) {
            check_parameters(target, &resolved.config)?;
        }
        println!("configuration valid (sha256 {})", resolved.config.sha256());
        return Ok(EXIT_OK);
    }

    let outcome = match cli.command {
        Command::Simulate => commands::simulate_cmd(&resolved),
        Command::Deterministic => commands::deterministic_cmd(&resolved),
        Command::FixedPoint => commands::fixed_point_cmd(&resolved),
        Command::Contraction => commands::contraction_cmd(&resolved, workers),
        Command::Occupation => commands::occupation_cmd(&resolved, workers),
        Command::Accessibility => commands::accessibility_cmd(&resolved, workers),
        Command::LowerBound => commands::lower_bound_cmd(&resolved, workers),
        Command::EProperty => commands::e_property_cmd(&resolved, workers),
        Command::Invariant => commands::invariant_cmd(&resolved, workers),
        Command::Tube => commands::tube_cmd(&resolved, workers),
        Command::Validate => unreachable!("handled above"),
    }?;
    let code = if outcome.passed { EXIT_OK } else { EXIT_SUITE };
    write_artifacts(
        cli.command,
        &resolved.config,
        outcome,
        workers,
        started,
        code,
    )?;
    if code == EXIT_SUITE {
        eprintln!("spm {}: suite assertion failed", cli.command.name());
    }
    Ok(code)
}

fn check_parameters(command: Command, config: &ExperimentConfig) -> Result<(), CliError> {
    use commands::*;
    match command {
        Command::Simulate => config.parameters::<SimulateParams>().map(drop),
        Command::Deterministic => config.parameters::<DeterministicParams>().map(drop),
        Command::FixedPoint | Command::Validate => config.parameters::<NoParams>().map(drop),
        Command::Contraction => config.parameters::<ContractionParams>().map(drop),
        Command::Occupation => {
            let p: OccupationParams = config.parameters()?;
            spm_core::ergodics::OccupationSpec::new(p.radius, p.delta, p.horizon)?;
            Ok(())
        }
        Command::Accessibility => config.parameters::<AccessibilityParams>().map(drop),
        Command::LowerBound => config.parameters::<LowerBoundParams>().map(drop),
        Command::EProperty => config.parameters::<EPropertyParams>().map(drop),
        Command::Invariant => config.parameters::<InvariantParams>().map(drop),
        Command::Tube => config.parameters::<TubeParams>().map(drop),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(dir.join(name), bytes)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(name).display())))
}

fn write_artifacts(
    command: Command,
    config: &ExperimentConfig,
    outcome: Outcome,
    workers: usize,
    started: Instant,
    exit_code: i32,
) -> Result<(), CliError> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut embedded = config.embedded();
    embedded["experiment"]["parameters"] = outcome.parameters;
    let config_sha256 = config.sha256();
    let report = json!({
        "subcommand": command.name(),
        "config": embedded,
        "config_sha256": config_sha256,
        "passed": outcome.passed,
        "result": outcome.result,
    });
    let mut report_bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    report_bytes.push(b'\n');

    let mut hashes = Map::new();
    write_file(dir, "report.json", &report_bytes)?;
    hashes.insert(
        "report.json".into(),
        Value::String(sha256_hex(&report_bytes)),
    );
    for (name, bytes) in &outcome.files {
        write_file(dir, name, bytes)?;
        hashes.insert(name.clone(), Value::String(sha256_hex(bytes)));
    }
    let manifest = json!({
        "tool": "spm",
        "subcommand": command.name(),
        "versions": {
            "spm-cli": env!("CARGO_PKG_VERSION"),
            "spm-core": spm_core::VERSION,
        },
        "config": config.embedded(),
        "config_sha256": config_sha256,
        "seed": config.seed,
        "workers": workers,
        "output_dir": dir,
        "exit_code": exit_code,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "artifacts": hashes,
    });
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_file(dir, "manifest.json", &bytes)
}

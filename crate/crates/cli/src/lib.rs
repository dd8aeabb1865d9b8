//! Experiment runner behind the `rfmvm` binary: config parsing, the five benchmarks, and
//! CSV/JSON reporting.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{Command, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiments::{run, Report};

#[derive(Debug, Parser)]
#[command(name = "rfmvm", version, about = "Simulated radio-frequency matrix-vector multiplication experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Inner-product accuracy against SNR
    IpBench(CommonArgs),
    /// Matrix-vector accuracy against SNR
    MvmBench(CommonArgs),
    /// Classification accuracy of a stored model
    Classify(CommonArgs),
    /// Closed-form energy per MAC over a size sweep
    Energy(CommonArgs),
    /// Preamble detection, timing and CFO statistics
    SyncBench(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma list or `start:stop:step`
    #[arg(long = "snr-db")]
    pub snr_db: Option<String>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub fidelity: Option<String>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Extra `key=value` overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CliCommand {
    fn parts(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::IpBench(a) => (Command::IpBench, a),
            CliCommand::MvmBench(a) => (Command::MvmBench, a),
            CliCommand::Classify(a) => (Command::Classify, a),
            CliCommand::Energy(a) => (Command::Energy, a),
            CliCommand::SyncBench(a) => (Command::SyncBench, a),
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve(cmd: &CliCommand) -> CliResult<ExperimentConfig> {
    let (command, a) = cmd.parts();
    let mut cfg = ExperimentConfig::defaults(command);
    if let Some(path) = &a.config {
        cfg.apply_file(path)?;
    }
    let flags = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("trials", a.trials.map(|v| v.to_string())),
        ("snr_db", a.snr_db.clone()),
        ("scheme", a.scheme.clone()),
        ("fidelity", a.fidelity.clone()),
        ("out_dir", a.out_dir.as_ref().map(|p| p.display().to_string())),
        ("threads", a.threads.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v, "command line")?;
        }
    }
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set {kv:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v, "--set")?;
    }
    Ok(cfg)
}

/// Runs one invocation end to end and returns the written CSV path.
pub fn execute(cmd: &CliCommand) -> CliResult<PathBuf> {
    let cfg = resolve(cmd)?;
    let t0 = Instant::now();
    let report = run(&cfg)?;
    let (csv, _) = report::write_outputs(&cfg, &report, t0.elapsed())?;
    Ok(csv)
}

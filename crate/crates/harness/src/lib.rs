//! Command-line experiment harness.
//!
//! Every subcommand loads one [`ExperimentConfig`], applies the global
//! overrides, runs a seeded experiment and writes CSV/JSON files into the
//! output directory. Re-running with the same seed rewrites identical bytes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skipcrawl_core::config::ExperimentConfig;
use thiserror::Error;

pub mod commands;
pub mod output;
pub mod targets;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] skipcrawl_core::Error),

    #[error("usage: {0}")]
    Usage(String),

    #[error("targets row {row}: {message}")]
    Targets { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_owned(),
            source,
        }
    }

    /// 2 for configuration and usage errors, 3 for failed assertions, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Model(_) | HarnessError::Usage(_) | HarnessError::Targets { .. } => 2,
            HarnessError::Assertion(_) => 3,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Parser)]
#[command(
    name = "skipcrawl",
    version,
    about = "Seeded skip/crawl robot experiments"
)]
pub struct Cli {
    /// Experiment config (JSON). Defaults to the shipped calibrated config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the number of trials per condition.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Check the experiment's expected outcome and exit 3 if it does not hold.
    #[arg(long = "assert", global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Peak force statistics for each tail length in the sweep.
    TailCharacterize,
    /// Lateral drift of the sync, async and open-loop gaits.
    GaitDrift {
        /// Remove all hardware asymmetry and heading noise.
        #[arg(long)]
        zero_noise: bool,
    },
    /// Velocity against moisture for every locomotion mode.
    MoistureSweep {
        /// Restrict to one material (uniform_sand or bentonite_clay).
        #[arg(long)]
        material: Option<String>,
        /// Comma-separated moisture grid replacing the configured one.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Skip velocity on each bench substrate.
    SubstrateBench,
    /// Mode-switching run over the configured segments.
    Scenario,
    /// Fit free parameters to target velocities.
    Calibrate {
        #[arg(long)]
        targets: PathBuf,
        /// Overrides the configured evaluation budget.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Peak, bootstrap and trajectory metrics for external CSVs.
    Analyze {
        /// CSV with columns time_s, force_N.
        #[arg(long)]
        force: Option<PathBuf>,
        /// CSV with columns time_s, x_m, y_m, heading_rad.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

/// Loads the config and applies the seed and trial overrides.
///
/// `--out` only redirects files (see [`output_dir`]); it never ends up in a
/// written config.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::canonical(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.experiments.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir))
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = output_dir(cli, &cfg);
    std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
    let verdict = match &cli.command {
        Command::TailCharacterize => commands::tail_characterize(&cfg, &out)?.verdict(),
        Command::GaitDrift { zero_noise } => {
            commands::gait_drift(&cfg, &out, *zero_noise)?.verdict(*zero_noise)
        }
        Command::MoistureSweep { material, grid } => {
            let material = material
                .as_deref()
                .map(commands::sweep_material)
                .transpose()?;
            commands::moisture_sweep(&cfg, &out, material, grid.as_deref())?.verdict()
        }
        Command::SubstrateBench => commands::substrate_bench(&cfg, &out)?.verdict(),
        Command::Scenario => commands::scenario(&cfg, &out)?.verdict(),
        Command::Calibrate { targets, budget } => {
            let fit = commands::calibrate(&cfg, &out, targets, *budget)?;
            println!("final loss {}", fit.loss);
            for row in &fit.rows {
                println!(
                    "{} {} {}: sim {:.3} target {:.3} cm/s",
                    row.target.mode.as_str(),
                    row.target.material,
                    row.target.moisture,
                    row.sim_cmps,
                    row.target.target_mean * 100.0
                );
            }
            fit.verdict()
        }
        Command::Analyze { force, trajectory } => {
            commands::analyze(&cfg, &out, force.as_deref(), trajectory.as_deref())?;
            Ok(())
        }
    };
    if cli.check {
        verdict.map_err(HarnessError::Assertion)?;
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

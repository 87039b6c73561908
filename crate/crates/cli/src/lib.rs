//! Command-line front end of `mmfbmc`.
//!
//! Every subcommand resolves one [`ExperimentConfig`]: the desk (or
//! full-scale) defaults, then the TOML file, then flags. Runs that write
//! files also write a [`RunManifest`] from which `replay` reproduces them.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mmfbmc::combining::Detector;
use mmfbmc::harness::{Estimator, FilterVariant};
use mmfbmc::ExperimentConfig;
use thiserror::Error;

pub use manifest::{RunManifest, Task};

#[derive(Debug, Parser)]
#[command(name = "mmfbmc", version, about = "FBMC/OQAM massive-MIMO uplink simulations")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Root seed of every random stream
    #[arg(long, global = true, env = "MMFBMC_SEED")]
    pub seed: Option<u64>,
    /// TOML experiment configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Start from the full-scale setup (M=256, K=10, L=40, N up to 512)
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

/// Flags that override single config entries.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub num_subcarriers: Option<usize>,
    #[arg(long, global = true)]
    pub overlap: Option<usize>,
    #[arg(long, global = true)]
    pub users: Option<usize>,
    /// Comma-separated array sizes
    #[arg(long, global = true, value_delimiter = ',')]
    pub antennas: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub symbols: Option<usize>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Comma-separated subset of mrc, zf, mmse
    #[arg(long, global = true, value_delimiter = ',')]
    pub detectors: Option<Vec<Detector>>,
    /// Comma-separated subset of original, modified
    #[arg(long, global = true, value_delimiter = ',')]
    pub variants: Option<Vec<FilterVariant>>,
    /// coefficient or end-to-end
    #[arg(long, global = true)]
    pub estimator: Option<Estimator>,
    /// Power delay profile as a `delay,power` CSV
    #[arg(long, global = true)]
    pub pdp_file: Option<PathBuf>,
    /// Leave out the CP-OFDM/ZF baseline
    #[arg(long, global = true)]
    pub no_cp_ofdm: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write the original and modified prototypes and their spectra
    DesignFilter,
    /// Run the orthogonality, Nyquist and estimator-agreement checks
    Validate {
        /// Check this filter CSV instead of the designed prototype
        #[arg(long)]
        filter: Option<PathBuf>,
    },
    /// SINR versus array size
    Sweep,
    /// Print the large-array saturation SINR
    Saturation,
    /// Estimate the PDP from a channel realization
    EstimatePdp {
        /// Binary channel file; drawn from the config when absent
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Also write the drawn channel
        #[arg(long)]
        save_channel: bool,
    },
    /// Re-run the command recorded in a manifest
    Replay { manifest: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mmfbmc::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        2
    }
}

/// What a finished command reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    /// Some validation check failed.
    Failed,
}

pub fn run(cli: &Cli) -> Result<Status, CliError> {
    let task = match &cli.command {
        Command::Replay { manifest } => {
            let m = RunManifest::read(manifest)?;
            let out_dir = cli.global.out_dir.clone().unwrap_or_else(|| m.out_dir.clone());
            return execute(&m.task, &m.config, &out_dir);
        }
        Command::DesignFilter => Task::DesignFilter,
        Command::Validate { filter } => Task::Validate { filter: filter.clone() },
        Command::Sweep => Task::Sweep,
        Command::Saturation => Task::Saturation,
        Command::EstimatePdp { channel, save_channel } => {
            Task::EstimatePdp { channel: channel.clone(), save_channel: *save_channel }
        }
    };
    let config = config::resolve(&cli.global, &cli.overrides)?;
    let out_dir = cli.global.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    execute(&task, &config, &out_dir)
}

/// Runs `task` and, when it wrote files, its manifest.
pub fn execute(task: &Task, config: &ExperimentConfig, out_dir: &std::path::Path) -> Result<Status, CliError> {
    let outcome = commands::run_task(task, config, out_dir)?;
    if !outcome.artifacts.is_empty() {
        let m = RunManifest::new(task.clone(), config.clone(), out_dir.to_path_buf(), outcome.artifacts);
        let path = m.write(out_dir)?;
        println!("manifest: {}", path.display());
    }
    Ok(outcome.status)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mmfbmc::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A subcommand together with its own options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Task {
    DesignFilter,
    Validate { filter: Option<PathBuf> },
    Sweep,
    Saturation,
    EstimatePdp { channel: Option<PathBuf>, save_channel: bool },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::DesignFilter => "design-filter",
            Task::Validate { .. } => "validate",
            Task::Sweep => "sweep",
            Task::Saturation => "saturation",
            Task::EstimatePdp { .. } => "estimate-pdp",
        }
    }
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub task: Task,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// File names relative to `out_dir`.
    pub artifacts: Vec<String>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(task: Task, config: ExperimentConfig, out_dir: PathBuf, artifacts: Vec<String>) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            task,
            seed: config.seed,
            config,
            out_dir,
            artifacts,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn file_name(task: &Task) -> String {
        format!("{}.manifest.json", task.name())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(Self::file_name(&self.task));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text)?;
        m.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(m)
    }
}

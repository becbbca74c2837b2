//! Experiment runner: presets, run plans, CSV output and built-in checks.

use std::path::{Path, PathBuf};

pub mod checks;
pub mod output;
pub mod plan;
pub mod sweep;
pub mod verify;

pub use output::{execute_plan, RunManifest};
pub use plan::{preset, Overrides, RunPlan, RunSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("simulation failed: {0}")]
    Simulation(adaptmeas_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), reason: reason.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Simulation(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<adaptmeas_core::Error> for CliError {
    fn from(e: adaptmeas_core::Error) -> Self {
        match e {
            adaptmeas_core::Error::Config { field, reason } => CliError::Config { field, reason },
            adaptmeas_core::Error::Argument { name, reason } => CliError::Config { field: name.to_string(), reason },
            other => CliError::Simulation(other),
        }
    }
}

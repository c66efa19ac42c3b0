//! Experiment driver for the hypocoercive Kolmogorov finite element library:
//! configuration, artifact output, the experiment subcommands and the
//! acceptance checks.

use std::fmt;

pub mod checks;
pub mod config;
pub mod experiments;
pub mod output;

pub use checks::{check_all, Status, Verdict};
pub use config::{ConfigError, Experiment, ExperimentConfig, Target};
pub use hypokfem_core as core;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(hypokfem_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config: {e}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<hypokfem_core::Error> for CliError {
    fn from(e: hypokfem_core::Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

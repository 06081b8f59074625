//! Data loading, experiment runners, checkpoints and reports behind the `efkd` tool.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod runner;
pub mod runs;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use report::{Format, Row, RunReport};
pub use runner::RunOptions;

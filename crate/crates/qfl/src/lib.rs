//! Experiment runner for the quantum fusion layer simulator: JSON configs, CSV and JSON
//! outputs, and the `qfl` command line. The numerics live in `qfl-core`.

pub mod commands;
pub mod config;
mod error;
pub mod fourier;
pub mod output;

pub use commands::{run, Outcome};
pub use config::{CommandConfig, ExperimentConfig, Shots};
pub use error::CliError;

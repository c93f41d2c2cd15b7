//! Experiment driver for path-coupled Bellman flows: config files, datasets,
//! checkpoints, oracle caches and the subcommands of the `pcbf` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod theory;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

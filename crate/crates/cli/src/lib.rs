//! The `predvar` command-line tool: generate synthetic datasets, fit the
//! estimators, evaluate fits and run consistency sweeps, with every artifact
//! written as CSV or JSON.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use commands::run;
pub use config::{Cli, Command, ExperimentConfig, Options};
pub use error::CliError;

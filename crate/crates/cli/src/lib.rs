//! Command line front end: JSON config plus flag overrides, one subcommand
//! per pipeline stage, every stage reading and writing files.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use cli::{run_from, Cli, Command};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};

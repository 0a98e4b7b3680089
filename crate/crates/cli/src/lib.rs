//! Configuration, orchestration and output for the `salm` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{exit, CliError, CliResult};

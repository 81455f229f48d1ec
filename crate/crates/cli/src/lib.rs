//! Data ingestion, configuration and subcommands behind the `arhmm` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use error::{CliError, CliResult};

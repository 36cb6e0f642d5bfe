//! Pipeline stages behind the `seqrl` binary.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

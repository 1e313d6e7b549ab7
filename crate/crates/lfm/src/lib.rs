//! File formats, run configuration and the experiment driver behind the `lfm`
//! command-line tool.

#![forbid(unsafe_code)]

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod verify;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

//! Subcommands of the `lmac` binary, usable as a library.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;

pub use config::RunConfig;
pub use error::{CliError, Result};

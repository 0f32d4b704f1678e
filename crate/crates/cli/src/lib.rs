//! Command-line front end: JSON configs, shipped presets and the subcommand
//! drivers behind the `ccwgd` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

pub use error::{CliError, Result};

//! Configuration loading, file formats and subcommands of `payload-sim`.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use commands::{cmd_plan, cmd_simulate, cmd_sweep, CommonOptions};
pub use config::RepoConfig;
pub use error::CliError;

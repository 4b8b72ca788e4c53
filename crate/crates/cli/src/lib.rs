//! Configuration, commands and the check suite behind the `cavfield` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod suite;

pub use commands::{run, Command, Outcome, RunArgs};
pub use config::SolverConfig;
pub use error::CliError;

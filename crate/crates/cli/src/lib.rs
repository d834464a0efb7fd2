//! Command-line front end: spec files, command dispatch and report output.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{execute, run, Command, Outcome, RunConfig};
pub use config::{load_spec, parse_spec, Overrides, SpecFile};
pub use error::CliError;

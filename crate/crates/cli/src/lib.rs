//! Command-line front end for `conemarket-core`.

pub mod config;
pub mod error;
pub mod execute;

pub use config::{parse_config, Command, Format, RunConfig};
pub use error::CliError;
pub use execute::{execute, render, Outcome};

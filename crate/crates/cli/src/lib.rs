//! Batch front end for the equilibrium-measure toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod suite;
pub mod svg;

pub use commands::Outcome;
pub use config::{Command, Format, RunConfig};
pub use error::CliError;

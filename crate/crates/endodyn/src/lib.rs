//! Command-line front end: JSON run configuration, trajectory and sweep CSV,
//! and versioned JSON reports for the `endodyn-core` simulator and
//! diagnostics.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, Result};

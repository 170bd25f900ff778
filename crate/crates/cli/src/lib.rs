//! Command-line front end: CSV analysis reports and simulation grids.

pub mod analyze;
pub mod error;
pub mod ingest;
pub mod report;
pub mod simulate;

pub use error::{CliError, Result};

//! Command-line front-end: file formats, reports and subcommands.

pub mod commands;
pub mod error;
pub mod formats;
pub mod report;

pub use commands::{run, Cli, Command, Outcome, RunConfig};
pub use error::{CliError, Result};
pub use formats::{parse_correspondences, write_correspondences};
pub use report::{CalibrationReport, CompareReport};

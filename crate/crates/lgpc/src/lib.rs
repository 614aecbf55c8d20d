//! File formats and command-line front end for `lgpc-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod report;

pub use error::{CliError, CliResult, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK};

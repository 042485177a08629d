//! File formats, configuration, the experiment runner and the command-line
//! front end around `crossaug-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod io;
pub mod logging;
pub mod report;
pub mod workload;

pub use error::{CliError, Result};

//! Config-driven runs on top of `cpinn`: dataset generation, training,
//! transfer calibration, discovery, sweeps and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod sampling;

pub use error::{CliError, Result};

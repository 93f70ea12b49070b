//! Batch driver for the eegdit pipeline: one JSON config, seeded stages, file artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::{AugmentMode, DatasetSource, RunConfig};
pub use error::{CliError, Result};

//! Experiment driver for the `tevae` crate: configuration, the
//! generate → preprocess → train → detect → evaluate pipeline, reports and
//! plots.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{resolve_config, ExperimentConfig, Overrides};
pub use error::{CliError, Result};

//! Command-line front end: configuration, CSV ingestion, named experiments
//! and report output.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod report;

pub use commands::{ExperimentRequest, Overrides, RunOutput};
pub use config::ModelConfig;
pub use data::load_csv;
pub use error::{CliError, Result};
pub use report::ReportBundle;

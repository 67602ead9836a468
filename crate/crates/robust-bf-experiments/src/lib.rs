//! Scenario catalog, Monte Carlo runner and output writers for the
//! `robust-bf` command-line tool.

pub mod cli;
pub mod manifest;
pub mod runner;
pub mod seed;
pub mod spec;
pub mod table;

use std::path::Path;

use thiserror::Error;

pub use runner::{run_experiment, RunControl};
pub use spec::{Algorithm, ScenarioId, ScenarioSpec};
pub use table::{ResultRow, ResultTable, SummaryRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("cannot parse config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

impl ExperimentError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        ExperimentError::Io(format!("{}: {e}", path.display()))
    }
}

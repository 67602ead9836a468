//! Run manifest written next to every result file.

use std::path::PathBuf;

use serde::Serialize;

use crate::spec::ScenarioSpec;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub format: String,
    pub spec: ScenarioSpec,
    pub rows: usize,
    pub failed_rows: usize,
    pub interrupted: bool,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(spec: &ScenarioSpec, threads: Option<usize>, format: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            library_version: robust_bf::VERSION,
            seed: spec.seed,
            threads,
            format: format.to_string(),
            spec: spec.clone(),
            rows: 0,
            failed_rows: 0,
            interrupted: false,
            outputs: Vec::new(),
        }
    }
}

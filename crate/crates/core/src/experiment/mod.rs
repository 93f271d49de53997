//! Experiment orchestration: configuration, runs, scenario comparison and
//! cell reports.

mod compare;
mod config;
mod report;
mod result;
mod run;

pub use compare::{compare_scenarios, write_comparison, Comparison, ComparisonRow};
pub use config::{ClientSpec, ConverterSettings, ExperimentConfig, Role, Source, Transport};
pub use report::{cells_report, CellsReport, CellsVariant};
pub use result::{load_result, RunStatus, ScenarioResult};
pub use run::{
    build_participant, build_partition, run_client_process, run_experiment, run_experiment_with_exe, serve_experiment,
    Overrides, RunContext,
};

use thiserror::Error;

use crate::bus::BusError;
use crate::cells::CellError;
use crate::clients::ClientError;
use crate::grid::GridError;
use crate::sectioned::SyntaxError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("line {line}, column {column}: {message}")]
    Field { line: usize, column: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("network: {0}")]
    Network(#[from] GridError),
    #[error("cells: {0}")]
    Cells(#[from] CellError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("experiment aborted: {reason} (partial results in {out_dir})")]
    Aborted { reason: String, out_dir: String },
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("result {path}: {message}")]
    Result { path: String, message: String },
    #[error("cannot compare: {0}")]
    Compare(String),
}

/// Lowercase hex SHA-256.
pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| ExperimentError::Io { path: path.display().to_string(), source }
    }
}

//! Benchmark and accuracy harness around [`vpuflow`].
//!
//! The binary in `main.rs` is a thin argument parser over these functions,
//! so everything it does can also be driven from code and tests.

pub mod accuracy;
pub mod bench;
pub mod config;
pub mod dataset;
pub mod fixture;
pub mod report;

use std::io;
use std::path::PathBuf;

use thiserror::Error;
use vpuflow::device::DeviceError;
use vpuflow::metrics::MetricsError;
use vpuflow::netgraph::GraphError;
use vpuflow::scheduler::{BatchError, ScheduleError};
use vpuflow::tensor::{LabelError, TensorError};

pub use accuracy::{cmd_accuracy, AccuracyReport, SubsetAccuracy};
pub use bench::{cmd_bench, BenchReport};
pub use config::{DeviceSpec, Overrides, RunConfig};
pub use dataset::{load_dataset, Sample};
pub use fixture::{cmd_gen_fixture, FixtureFiles, FixtureSpec};
pub use report::CsvRow;

/// Process exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 1;
/// Process exit status for everything that goes wrong after the
/// configuration was accepted.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no .ntsr samples in {0}")]
    DatasetEmpty(PathBuf),
    #[error("no label for sample `{0}`")]
    MissingLabel(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Batch(Box<BatchError>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("I/O failure on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> CliError {
        CliError::Batch(Box::new(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into().display().to_string();
        move |source| CliError::Io { path, source }
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

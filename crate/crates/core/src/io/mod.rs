//! File formats, reports and the network runner.

use std::path::PathBuf;

use thiserror::Error;

use crate::arch::ConfigError;
use crate::cost::CostError;
use crate::engine::EngineError;
use crate::tensor::TensorError;

pub mod compare;
pub mod config;
pub mod report;
pub mod runner;
pub mod tensor_file;
pub mod trace;

pub use compare::{compare_to_paper, Comparison};
pub use config::{load_config, ConfigFile};
pub use report::{emit_report, ReportFormat};
pub use runner::{run_network, RunManifest, RunMode};
pub use tensor_file::{read_filters, read_tensor, write_filters, write_tensor};
pub use trace::dump_trace;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("layer {index} ({name}): {source}")]
    Layer {
        index: usize,
        name: String,
        source: EngineError,
    },
    #[error("transaction logging was not enabled for this run")]
    LoggingDisabled,
    #[error("comparison needs the reference architecture; {0}")]
    NotDefaultConfig(String),
    #[error("comparison needs a full VGG-16 report: {0}")]
    NotVgg16(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::File {
            path: path.into(),
            source,
        }
    }
}

//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrafError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("meta-path composition error: {0}")]
    Composition(String),
    #[error("adjacency normalization error: node {node} has zero out-weight")]
    Normalization { node: usize },
    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GrafError {
    /// Process exit code for the CLI: 2 config, 3 data, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            GrafError::Config(_) | GrafError::Parameter(_) => 2,
            GrafError::Training { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, GrafError>;

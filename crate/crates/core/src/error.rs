use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph has no interior nodes")]
    EmptyGraph,

    #[error("oracle refused: {nodes} nodes exceeds the enumeration limit of {limit}")]
    OracleTooLarge { nodes: usize, limit: usize },

    #[error("uncovered query: no labeled point within bandwidth {h} of {point:?}")]
    Uncovered { point: Vec<f64>, h: f64 },

    #[error("split error: {0}")]
    Split(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

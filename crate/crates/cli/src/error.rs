use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("inconsistent views: {0}")]
    InconsistentViews(String),
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: latefusion::Error,
    },
    #[error("every grid cell failed; first error: {0}")]
    AllCellsFailed(String),
    #[error("record has no grid cells")]
    EmptyGrid,
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for data problems, 4 when no grid
    /// cell produced a result.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::AllCellsFailed(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: row {row}, column {col}: {reason}")]
    Parse { path: String, row: usize, col: usize, reason: String },
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{stage}: {source}")]
    Engine {
        stage: &'static str,
        #[source]
        source: mlnltp::Error,
    },
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub(crate) fn file(path: &Path, reason: impl ToString) -> Self {
        BenchError::File { path: path.display().to_string(), reason: reason.to_string() }
    }

    /// Process exit status: 2 for bad input or configuration, 3 for numerical
    /// failures inside the engine.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Engine { source, .. } => match source {
                mlnltp::Error::Parameter(_) | mlnltp::Error::Dimension(_) | mlnltp::Error::Domain(_) => 2,
                _ => 3,
            },
            _ => 2,
        }
    }
}

/// Attaches the pipeline stage to engine errors.
pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Stage<T> for mlnltp::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| BenchError::Engine { stage, source })
    }
}

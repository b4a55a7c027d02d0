use std::path::PathBuf;

use linproc_core::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    Threads(String),
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INSUFFICIENT_SIGNAL: i32 = 3;

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(Error::InsufficientSignal { .. }) => EXIT_INSUFFICIENT_SIGNAL,
            _ => EXIT_CONFIG,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(serde_json::Error),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Core(#[from] gkdv_core::Error),
}

impl HarnessError {
    /// 1 for bad input, 2 for a numerical abort, 3 for an exceeded budget,
    /// 4 for I/O failures.
    pub fn exit_code(&self) -> u8 {
        use gkdv_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Read { .. } => 1,
            HarnessError::Aborted(_) => 2,
            HarnessError::Core(E::BudgetExceeded { .. }) => 3,
            HarnessError::Core(E::NonFiniteState { .. } | E::NonFiniteSample { .. }) => 2,
            HarnessError::Core(_) => 1,
            HarnessError::Write { .. } | HarnessError::Csv(_) | HarnessError::Json(_) => 4,
        }
    }
}

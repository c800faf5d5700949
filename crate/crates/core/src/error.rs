use thiserror::Error;

use crate::dynamics::RunTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Step budget exhausted before stabilization; carries the partial trace.
    #[error("run truncated after {} steps without stabilizing", .0.steps())]
    Truncated(Box<RunTrace>),

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("underpowered: {0}")]
    Underpowered(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(offset: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }
}

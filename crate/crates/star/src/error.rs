use std::io;

use thiserror::Error;

/// Errors from the services, the harness and the CLI.
#[derive(Debug, Error)]
pub enum StarError {
    #[error(transparent)]
    Core(#[from] star_core::Error),
    #[error("epoch {claimed} is not being served (current {current})")]
    EpochExpired { claimed: u64, current: u64 },
    #[error("submission epoch {0} is closed")]
    EpochClosed(u64),
    #[error("submission epoch {0} is still open")]
    EpochOpen(u64),
    #[error("no such epoch: {0}")]
    UnknownEpoch(u64),
    #[error("relay key id {got} does not match {expected}")]
    KeyMismatch { got: u8, expected: u8 },
    #[error("capsule could not be opened")]
    CapsuleRejected,
    #[error("malformed inner request: {0}")]
    MalformedInnerRequest(&'static str),
    #[error("rate limit exceeded")]
    RateLimited,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("log for epoch {epoch} is corrupt at offset {offset}")]
    CorruptLog { epoch: u64, offset: u64 },
    #[error("upstream request failed: {0}")]
    Upstream(String),
    #[error("report does not match the counting oracle: {0}")]
    OracleMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = StarError> = std::result::Result<T, E>;

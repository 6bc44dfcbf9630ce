use thiserror::Error;

/// Errors returned by the core primitives.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Error {
    #[error("input has the wrong length")]
    InputLength,
    #[error("threshold must be at least 1")]
    InvalidThreshold,
    #[error("not enough distinct shares to recover the secret")]
    InsufficientShares,
    #[error("shares belong to different fields")]
    FieldMismatch,
    #[error("unsupported parameter")]
    Unsupported,
    #[error("randomness source failed")]
    RngFailure,
    #[error("malformed VOPRF request")]
    MalformedRequest,
    #[error("malformed VOPRF response")]
    MalformedResponse,
    #[error("DLEQ proof rejected")]
    ProofRejected,
    #[error("malformed message")]
    MalformedMessage,
    #[error("messages span more than one epoch")]
    EpochMismatch,
    #[error("ciphertext failed to decrypt")]
    DecryptionFailed,
}

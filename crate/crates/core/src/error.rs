use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum BkError {
    /// Invalid arithmetic context data (bad prime, field, zeta, ...).
    #[error("context error: {0}")]
    Context(String),
    /// Structurally malformed object (dimensions, precision, schema).
    #[error("malformed input at {path}: {message}")]
    Malformed { path: String, message: String },
    /// An operation's mathematical precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The enumeration grid exceeds its configured candidate cap.
    #[error("grid cap exceeded: {candidates} candidates > cap {cap}")]
    CapExceeded { candidates: u64, cap: u64 },
}

impl BkError {
    pub fn malformed(path: impl Into<String>, message: impl Into<String>) -> Self {
        BkError::Malformed {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BkError>;

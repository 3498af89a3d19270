use thiserror::Error;

/// Errors raised by the estimation core.
#[derive(Debug, Error)]
pub enum NneError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("training failed at epoch {epoch}: {reason} (last finite train loss {last_loss})")]
    Training {
        epoch: usize,
        reason: String,
        last_loss: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("internal numerical error: {0}")]
    Numerical(String),
}

impl NneError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn dimension(what: &'static str, expected: usize, got: usize) -> Self {
        Self::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T, E = NneError> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("row {row}, session {session:?}: {reason}")]
    Validation { row: usize, session: String, reason: String },

    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },

    #[error(transparent)]
    Core(#[from] nne_core::NneError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

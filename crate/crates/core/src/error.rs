use thiserror::Error;

/// Errors produced by fitting, transforms and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate rank: {0}")]
    DegenerateRank(String),

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad user input or configuration rather
    /// than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::DegenerateRank(_) | Error::Numerical(_) | Error::Consistency(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("trajectory too short: need at least {need} readout samples, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line tool: 2 for input errors,
    /// 3 for infeasible geometry, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleGeometry(_) => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

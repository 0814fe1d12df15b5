use std::path::PathBuf;

/// Errors produced by the lifting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no observations: every ray is empty or unlabeled")]
    NoObservations,

    #[error("problem too large for the dense oracle ({primitives} primitives, limit {limit}); sub-sample the scene")]
    ScaleLimit { primitives: usize, limit: usize },

    #[error("no valley found in attention histogram")]
    NoValley,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{}: malformed {field}: {message}", path.display())]
    Format {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 invalid input, 2 invariant violation, 3 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvariantViolation(_) => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

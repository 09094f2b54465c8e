use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("I/O error at {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("training diverged: non-finite value in term `{term}`")]
    Divergence { term: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("tensor backend: {0}")]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Io { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::MissingArtifact(_) => 5,
            Error::State(_) | Error::Tensor(_) => 1,
        }
    }
}

pub(crate) fn ensure_same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::arg(format!("{what}: dimension mismatch ({a} vs {b})")));
    }
    Ok(())
}

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad arguments or malformed data supplied by the caller.
    #[error("input error: {0}")]
    Input(String),
    /// A factorization or eigensolver failed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An iterative estimator did not converge.
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Estimation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

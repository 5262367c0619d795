use std::path::PathBuf;

/// Errors produced by the decomposition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid coordinates: {0}")]
    Coordinate(String),

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("cannot fill missing cell: {0}")]
    Unfillable(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("restart {run} (seed {seed}) failed: {source}")]
    RunFailed {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("undefined coefficient: {0}")]
    UndefinedCoefficient(String),

    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(String),

    #[error("malformed input {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by the numbers themselves (NaN, SVD breakdown),
    /// as opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::RunFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

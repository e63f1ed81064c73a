use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input matrix or vector contains NaN or infinite entries.
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input is structurally unusable (e.g. an all-zero matrix where a range
    /// basis is requested).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A requested rank exceeds what the input supports numerically.
    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    /// An environment specification violates its invariants.
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    /// The iterative solver produced a non-finite objective.
    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    /// A dense factorization failed its accuracy verification.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Experiment configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than a
    /// runtime failure. The CLI maps these to a distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

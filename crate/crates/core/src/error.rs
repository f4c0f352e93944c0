use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// Entries `(species, complex)` (0-based) where a negative coefficient
    /// sits over a zero exponent.
    #[error("system is not kinetic; violating entries (species, complex): {0:?}")]
    NotKinetic(Vec<(usize, usize)>),

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("no realization exists: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    NumericFailure(String),

    #[error("regressor matrix is rank deficient; collinear monomials: {columns:?}")]
    RankDeficient { row: usize, columns: Vec<usize> },

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure inside one stage of an end-to-end run.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Infeasible(_) => 2,
            Error::NumericFailure(_) | Error::Divergence { .. } => 3,
            Error::Config(_) => 4,
            _ => 1,
        }
    }
}

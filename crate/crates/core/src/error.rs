use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Cholesky factorization failed (final jitter tried: {jitter:e})")]
    Cholesky { jitter: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("hyperparameter optimization failed in every restart: {}", causes.join("; "))]
    OptimizationFailed { causes: Vec<String> },

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }

    pub(crate) fn at_row(row: usize, source: Error) -> Self {
        Error::AtRow {
            row,
            source: Box::new(source),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }

    /// Numerical failures (as opposed to validation or I/O problems).
    pub fn is_numerical(&self) -> bool {
        if let Error::AtRow { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::Cholesky { .. } | Error::Degenerate(_) | Error::OptimizationFailed { .. }
        )
    }
}

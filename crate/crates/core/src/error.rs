use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("matrix is not positive definite (smallest eigenvalue {smallest:e})")]
    NotPositiveDefinite { smallest: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty sample")]
    EmptySample,

    #[error(
        "design is rank deficient (rank {rank} < p = {p}); use the generic leave-one-out path"
    )]
    SingularDesign { rank: usize, p: usize },

    #[error("leverage of observation {index} is {leverage}, too close to 1")]
    DegenerateLeverage { index: usize, leverage: f64 },

    #[error("refit without observation {index} failed: {source}")]
    Refit {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate sample split: {train} training rows, {holdout} holdout rows")]
    DegenerateSplit { train: usize, holdout: usize },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

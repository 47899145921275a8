use thiserror::Error;

/// Errors raised while validating inputs or running an analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: treatment indicator must be 0 or 1, found `{value}`")]
    NonBinaryAssignment { row: usize, value: String },

    #[error("row {row}: outcome `{value}` is not a finite number")]
    NonNumericOutcome { row: usize, value: String },

    #[error("experiment has no treated units")]
    NoTreated,

    #[error("experiment has no control units")]
    NoControl,

    #[error("stratum `{label}` must contain at least one treated and one control unit")]
    DegenerateStratum { label: String },

    #[error("input is malformed: {0}")]
    Malformed(String),

    #[error(
        "exact enumeration needs {assignments:.3e} assignments, above the cap of {cap}; \
         use Monte Carlo mode instead"
    )]
    ExactCapExceeded { assignments: f64, cap: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("null distribution does not match the design: {0}")]
    DesignMismatch(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

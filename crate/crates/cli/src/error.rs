//! Error classes and their exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("flag error: {0}")]
    Flag(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Flag(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<itq_core::Error> for CliError {
    fn from(e: itq_core::Error) -> Self {
        use itq_core::Error as E;
        match e {
            E::MissingColumn(_)
            | E::NonBinaryAssignment { .. }
            | E::NonNumericOutcome { .. }
            | E::NoTreated
            | E::NoControl
            | E::DegenerateStratum { .. }
            | E::Malformed(_)
            | E::Csv(_) => CliError::Input(e.to_string()),
            E::InvalidParameter(_) | E::DesignMismatch(_) | E::ExactCapExceeded { .. } => CliError::Flag(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("design matrix is rank deficient at column {column} ({name})")]
    RankDeficient { column: usize, name: String },

    #[error("complete separation: treatment indicator is constant ({0})")]
    Separation(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("arm {arm} has {count} labeled units, at least 2 required")]
    DegenerateArm { arm: &'static str, count: usize },

    #[error("all {0} replications failed")]
    AllFailed(usize),

    #[error("enumeration too large: {0} states")]
    EnumerationTooLarge(u128),

    #[error("csv output failed: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("account not found: {0}")]
    AccountNotFound(String),

    #[error("account {0} has no transactions")]
    NoTransactions(String),

    #[error("missing current balance for account {0}")]
    MissingBalance(String),

    #[error("parse error at line {line}: {reason}")]
    RowParse { line: usize, reason: String },

    #[error("split date {0} lies outside the observed range")]
    SplitOutOfRange(chrono::NaiveDate),

    #[error("series too short: need at least {need}, got {got}")]
    SeriesTooShort { need: usize, got: usize },

    #[error("sequence lengths {0} and {1} exceed the band window {2}")]
    BandInfeasible(usize, usize, usize),

    #[error("no candidate windows available for matching")]
    NoCandidates,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

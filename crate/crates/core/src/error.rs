use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown query `{0}`")]
    UnknownQuery(String),

    #[error("zero-probability secret: record {record} value {value}")]
    ZeroProbabilitySecret { record: usize, value: usize },

    #[error("no admissible secret pair")]
    NoAdmissiblePair,

    #[error("problem too large to enumerate: {0}")]
    TooLarge(String),

    #[error("kept mass is zero")]
    ZeroMass,

    #[error("chain does not mix: {0}")]
    ChainDoesNotMix(String),

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("unsupported distribution class for {mechanism}: {class}")]
    UnsupportedClass {
        mechanism: &'static str,
        class: &'static str,
    },

    #[error("composition guarantee void: {0}")]
    CompositionVoid(String),

    #[error("ledger integrity check failed at line {line}: {reason}")]
    LedgerTampered { line: usize, reason: String },

    #[error("group sensitivity for query `{0}` must be supplied by the caller")]
    GroupSensitivityRequired(String),

    #[error("row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

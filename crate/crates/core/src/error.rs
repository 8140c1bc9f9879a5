use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("constraint matrix is rank deficient: rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },

    #[error("only {available} nontrivial eigenpairs available, {requested} requested")]
    InsufficientSpectrum { requested: usize, available: usize },

    #[error("class has no positive examples")]
    NoPositives,

    #[error("problem too large for dense solve: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::InsufficientSpectrum { .. } => "InsufficientSpectrum",
            Error::NoPositives => "NoPositives",
            Error::TooLarge { .. } => "TooLarge",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("column not found: {0}")]
    ColumnNotFound(String),

    #[error("invalid response column {0}: {1}")]
    InvalidResponse(String, String),

    #[error("missing value in column {column} at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("rank-deficient design; linearly dependent columns: {}", .columns.join(", "))]
    RankDeficientDesign { columns: Vec<String> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is not positive definite")]
    CovarianceNotPD,

    #[error("hypothesis matrix R B R^T is singular")]
    HypothesisSingular,

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("insufficient residual degrees of freedom (n = {n}, p = {p})")]
    InsufficientDf { n: usize, p: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("optimizer did not converge after {iterations} iterations (best ratios {best:?}, criterion {criterion})")]
    ConvergenceFailure {
        best: Vec<f64>,
        criterion: f64,
        iterations: usize,
    },

    #[error("response has no residual variance to partition")]
    DegenerateResponse,

    #[error("invalid R² value {0}: must lie in [0, 1)")]
    InvalidR2(f64),

    #[error("insufficient group data: {0}")]
    InsufficientGroupData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::CovarianceNotPD
            | Error::HypothesisSingular
            | Error::NumericalFailure(_)
            | Error::ConvergenceFailure { .. }
            | Error::DegenerateResponse => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}

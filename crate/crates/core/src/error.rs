use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract shape error: {0}")]
    ContractShape(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right} sites")]
    LengthMismatch { left: usize, right: usize },

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("input not normalized: norm^2 = {0}")]
    NotNormalized(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("system size {n} exceeds the limit {max} of this backend")]
    SizeLimit { n: usize, max: usize },

    #[error("zero norm state")]
    ZeroNorm,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("degenerate fit data: {0}")]
    DegenerateFit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl From<ndarray::ShapeError> for Error {
    fn from(e: ndarray::ShapeError) -> Self {
        Error::ShapeMismatch(e.to_string())
    }
}

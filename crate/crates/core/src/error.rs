use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature underresolved: {0}")]
    QuadratureUnderresolved(String),

    #[error("divergent resolvent: {0}")]
    DivergentResolvent(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("allocation limit: {cells} cells exceeds budget of {budget}")]
    AllocationLimit { cells: usize, budget: usize },

    #[error("offset {offset} out of range for lattice with {nt} rows")]
    OffsetOutOfRange { offset: usize, nt: usize },

    #[error("horizon {horizon} exceeds admissible Picard horizon {limit}")]
    HorizonExceeded { horizon: f64, limit: f64 },

    #[error("truncation too small: kernel mass {outside:e} outside [-{half_width}, {half_width}] exceeds {tol:e}")]
    TruncationTooSmall { half_width: f64, outside: f64, tol: f64 },

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

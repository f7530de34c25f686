use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shift coordinate {value} outside [-{bound}, {bound}]")]
    ShiftOutOfRange { value: f64, bound: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("cube has zero mass")]
    EmptyCube,
    #[error("no atoms inside the grid root")]
    EmptyRoot,
    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,
    #[error("{atoms} atoms exceed the dense limit {limit}")]
    DenseLimit { atoms: usize, limit: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-accretive test function on cube (generation {generation}, index {index:?})")]
    NonAccretive { generation: u32, index: Vec<i64> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cube lies outside the grid root")]
    OutsideRoot,
    #[error("bookkeeping residual {residual:e} in bucket {bucket}")]
    Bookkeeping { bucket: String, residual: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

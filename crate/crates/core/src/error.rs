use thiserror::Error;

use crate::lattice::CubeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0}; expected 1 or 2")]
    Dimension(usize),
    #[error("invalid level range: k_min = {0}")]
    LevelRange(i32),
    #[error("level {level} outside lattice range [{k_min}, 0]")]
    LevelOverflow { level: i32, k_min: i32 },
    #[error("lattice or grid mismatch")]
    Mismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Carleson condition violated at {cube:?}: sum {sum} > measure {measure}")]
    CarlesonViolation {
        cube: CubeId,
        sum: f64,
        measure: f64,
    },
    #[error("normalization audit failed at cube {cube:?}: product {product}")]
    Normalization { cube: CubeId, product: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no data: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

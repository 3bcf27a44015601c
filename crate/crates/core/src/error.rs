use thiserror::Error;

use crate::lp::LpError;

/// Errors raised by the cone, path, model and solver operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty generator list")]
    EmptyGenerators,
    #[error("zero generator at index {0}")]
    ZeroGenerator(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("cone is not proper")]
    NotProper,
    #[error("unsupported dimension {0}: exact extreme-ray enumeration is limited to d <= 4")]
    UnsupportedDimension(usize),
    #[error("liquidation value is unbounded")]
    Unbounded,
    #[error("path is not K-decreasing at step {0}")]
    NotKDecreasing(usize),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("time index {index} out of range 0..={horizon}")]
    TimeOutOfRange { index: usize, horizon: usize },
    #[error("invalid utility: {0}")]
    InvalidUtility(String),
    #[error("instance too large for brute force: {0}")]
    InstanceTooLarge(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("law mismatch: {0}")]
    LawMismatch(String),
    #[error("ambiguous transfer table: {0}")]
    AmbiguousTable(String),
    #[error("filtration is not generated by the driving process: {0}")]
    NonGenerating(String),
    #[error("process is not adapted: {0}")]
    NotAdapted(String),
    #[error("strategy is not admissible: {0}")]
    NotAdmissible(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

pub type Result<T> = std::result::Result<T, Error>;

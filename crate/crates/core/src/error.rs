use thiserror::Error;

/// Errors raised while validating channels, building squeeze parameters,
/// iterating solvers, or analysing convergence rates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix has no entries")]
    EmptyMatrix,

    #[error("channel needs at least 2 input letters, got {0}")]
    TooFewInputs(usize),

    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("row {row} sums to {sum}, outside tolerance")]
    RowSumOutOfTolerance { row: usize, sum: f64 },

    #[error("column {col} is identically zero")]
    ZeroColumn { col: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("distribution sums to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("probability {value} at index {index} is below its floor {floor}")]
    BelowFloor {
        index: usize,
        value: f64,
        floor: f64,
    },

    #[error("floor total r+ = {r_plus} must be < 1")]
    RPlusNotLessThanOne { r_plus: f64 },

    #[error("constraint W >= 1 rW violated at ({row}, {col}) by {violation}")]
    ConstraintW {
        row: usize,
        col: usize,
        violation: f64,
    },

    #[error("squeezed matrix has negative entry {value} at ({row}, {col})")]
    ConstraintWTilde { row: usize, col: usize, value: f64 },

    #[error("lambda = {lambda} outside [{lower}, {upper}]")]
    LambdaOutOfRange { lambda: f64, lower: f64, upper: f64 },

    #[error("floor infeasible: sum of floors {r_plus} >= 1")]
    InfeasibleFloor { r_plus: f64 },

    #[error("weight at index {index} is not positive ({value})")]
    NonpositiveWeight { index: usize, value: f64 },

    #[error("start point has p[{index}] = {value}; iterates must be interior")]
    NonInteriorStart { index: usize, value: f64 },

    #[error("divergence is infinite for input {row}: output {col} unreachable under q")]
    NumericalBreakdown { row: usize, col: usize },

    #[error("objective decreased by {drop:e} at iteration {iter}")]
    MonotonicityViolation { iter: usize, drop: f64 },

    #[error("all rows of the channel are equal")]
    DegenerateChannel,

    #[error("operation needs a 2-row channel, got {0} rows")]
    NotTwoByN(usize),

    #[error("no column where row {row} strictly exceeds the other row")]
    NoStrictColumn { row: usize },

    #[error("squeezed output weight f[{index}] = {value} is negative")]
    NegativeOutputWeight { index: usize, value: f64 },

    #[error("fixed point on the boundary of the floored simplex at index {index}")]
    BoundaryFixedPoint { index: usize },

    #[error("not a fixed point: one step moves it by {displacement:e}")]
    NotAFixedPoint { displacement: f64 },

    #[error("symmetric eigensolver did not converge in {sweeps} sweeps")]
    EigensolverNoConvergence { sweeps: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

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

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

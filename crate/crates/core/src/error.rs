use thiserror::Error;

/// Errors raised by walk construction, assembly, solvers and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown walk `{0}` (expected lsrw, srw, king, triangular or knight)")]
    UnknownWalk(String),
    #[error("invalid step set: {0}")]
    InvalidSteps(String),
    #[error("laziness must lie in [0, 1), got {0}")]
    InvalidLaziness(f64),
    #[error("covariance is not positive definite (det = {0})")]
    DegenerateCovariance(f64),
    #[error("invalid conductance interval [{c1}, {c2}]")]
    InvalidInterval { c1: f64, c2: f64 },
    #[error("domain radius must be at least {min}, got {got}")]
    InvalidRadius { min: usize, got: usize },
    #[error("eta must lie in (0, 1/2), got {0}")]
    InvalidEta(f64),
    #[error("vertex ({0}, {1}) is not in the domain")]
    NotInDomain(i64, i64),
    #[error("domain vertex ({0}, {1}) lies outside the conductance environment")]
    EnvironmentMismatch(i64, i64),
    #[error("vertex {0} has zero measure")]
    ZeroMeasure(usize),
    #[error("operator is not reversible: m(x)P(x,y) != m(y)P(y,x) at ({0}, {1})")]
    NotReversible(usize, usize),
    #[error("vector length {got} does not match operator size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("evolution window of {cells} cells exceeds the cap of {cap}")]
    WindowTooLarge { cells: usize, cap: usize },
    #[error("dense eigendecomposition of size {n} exceeds the cap of {cap}")]
    DenseCapExceeded { n: usize, cap: usize },
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the filtering library.
///
/// The three numerical breakdown kinds (`NotPositiveDefinite`,
/// `HyperbolicBreakdown`, `NonFiniteState`) are treated as filter failures by
/// the Monte Carlo harness rather than as programming errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("triangular matrix is singular (zero diagonal at {index})")]
    SingularTriangular { index: usize },
    #[error("hyperbolic rotation breakdown at row {row}: |pivot| {pivot:e} <= |entry| {entry:e}")]
    HyperbolicBreakdown { row: usize, pivot: f64, entry: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("degenerate sigma-point scaling: n + lambda = {0}")]
    DegenerateScaling(f64),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered")]
    NonFiniteState,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("degenerate measurement geometry")]
    DegenerateGeometry,
    #[error("measurement model has no Jacobian")]
    MissingJacobian,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: malformed dataset: {message}")]
    Format { path: String, message: String },
}

impl Error {
    /// True for the numerical breakdowns that mark a filter run as failed.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::HyperbolicBreakdown { .. }
                | Error::NonFiniteState
                | Error::SingularTriangular { .. }
                | Error::StepSizeUnderflow { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the estimators, selection procedures and harnesses.
#[derive(Debug, Error)]
pub enum KmseError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    Convergence { sweeps: usize, residual: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate bandwidth: all sample points coincide")]
    DegenerateBandwidth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("iteration diverged at step {step}: weight norm {norm:e} exceeds guard {guard:e}")]
    Divergence { step: usize, norm: f64, guard: f64 },

    #[error("non-finite objective at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<KmseError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KmseError {
    /// True for errors caused by bad user input or configuration, as opposed
    /// to numerical failures inside an algorithm.
    pub fn is_input_error(&self) -> bool {
        match self {
            KmseError::Input(_)
            | KmseError::DimensionMismatch { .. }
            | KmseError::DegenerateBandwidth
            | KmseError::Config(_)
            | KmseError::Parse { .. }
            | KmseError::Unsupported(_)
            | KmseError::Io(_) => true,
            KmseError::Replication { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, KmseError>;

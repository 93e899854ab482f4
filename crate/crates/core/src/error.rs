use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("invalid interval ({a}, {b}): need finite a < b")]
    InvalidInterval { a: f64, b: f64 },

    #[error("point {x} lies outside the interval [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "eigensolver did not converge within {iterations} iterations (worst residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigenvalues {index} and {next} are not separated: {value:e} vs {next_value:e}")]
    EigenvalueTie {
        index: usize,
        next: usize,
        value: f64,
        next_value: f64,
    },

    #[error("eigenvalue {index} is not positive ({value:e})")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("under-resolved eigenfunction {rank}: {reason}")]
    UnderResolved { rank: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::EigenvalueTie { .. }
                | Error::NonPositiveEigenvalue { .. }
                | Error::UnderResolved { .. }
        )
    }
}

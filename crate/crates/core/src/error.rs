use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix exponential overflowed")]
    ExpmOverflow,

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("nominal matrix A is not Hurwitz (max real part {max_real_part:.6e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("reduced dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("operator does not leave the symmetric subspace invariant (defect {0:.3e})")]
    NotSymmetricInvariant(f64),

    #[error("integrator failed at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("switching chattered: more than {0} events")]
    Chattering(usize),

    #[error("upper-bound sweep exhausted at delta = {last_delta}")]
    SweepExhausted { last_delta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

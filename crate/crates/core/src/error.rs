use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A multiplier that is singular at the zero wavenumber met a field with
    /// a nonzero mean.
    #[error("singular multiplier applied to a field with nonzero mean (|mean mode| = {mean:.3e}, L2 = {norm:.3e})")]
    SingularMode { mean: f64, norm: f64 },

    #[error("symbol violates m(-xi) = conj(m(xi)) at wavenumber ({0}, {1})")]
    NonRealSymbol(i64, i64),

    #[error("non-positive scale parameter: {0}")]
    NonPositiveScale(&'static str),

    #[error("bad specification: {0}")]
    BadSpec(String),

    #[error("free surface sample {value:.6e} outside the working range ({lower:.6e}, {upper:.6e}]")]
    RangeViolation { value: f64, lower: f64, upper: f64 },

    #[error("fluid depth {min_depth:.6e} at or below the floor {floor:.1e}")]
    DepthViolation { min_depth: f64, floor: f64 },

    #[error("linear solve failed after {iterations} iterations (relative residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    LinearSolveFailure { iterations: usize, history: Vec<f64> },

    #[error("nonlinear iteration did not converge after {iterations} iterations (residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, history: Vec<f64> },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

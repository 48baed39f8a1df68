use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or drift parameter violates its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The caller combined arguments in an unsupported way.
    #[error("usage error: {0}")]
    Usage(String),

    /// Cholesky factorization lost positive definiteness.
    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    Cholesky { pivot: usize, value: f64 },

    /// Circulant embedding produced an eigenvalue below tolerance.
    #[error("circulant embedding has negative eigenvalue {min:e} at index {index} (tolerance {tol:e})")]
    NegativeEigenvalue { min: f64, index: usize, tol: f64 },

    /// The implicit equation could not be bracketed: no positive root in the searched interval.
    #[error("no sign change of the implicit-step residual on [{lo:e}, {hi:e}] after {iterations} expansions; the step size likely violates the solvability bound")]
    Bracket { lo: f64, hi: f64, iterations: usize },

    /// A drift or residual evaluation returned a non-finite value.
    #[error("non-finite evaluation at x = {x:e}: {what}")]
    NonFinite { x: f64, what: String },

    /// Root refinement exhausted its iteration budget.
    #[error("root refinement did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A failure inside the time-stepping loop, annotated with the step index.
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// A configuration problem that is not recoverable at run time.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the transport solvers and their building blocks.
#[derive(Debug, Clone, Error)]
pub enum OtError {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A coupling or marginal pair violates the transport constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The requested combination of options is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative solver stopped before reaching its tolerance.
    ///
    /// `best` carries the last primal estimate when the solver has one.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Option<Vec<f64>>,
    },
}

pub type Result<T> = std::result::Result<T, OtError>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(OtError::Shape(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}

use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state is not stable (margin = {margin:.3e}); linearized covariance undefined")]
    Unstable { margin: f64 },

    #[error("state is marginal (eigenvalue sum {sum:.3e} ~ 0); covariance diverges")]
    Marginal { sum: f64 },

    #[error("stability matrix is not diagonalizable within tolerance (cond(W) = {cond:.3e}); use the Lyapunov route")]
    Defective { cond: f64 },

    #[error("numerical consistency check failed: {0}")]
    Consistency(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("trajectory diverged at tau = {tau:.6e} (|state| = {norm:.3e})")]
    Divergence { tau: f64, norm: f64 },

    #[error("step size underflow at tau = {tau:.6e} (h = {h:.3e}); the system is too stiff for the explicit integrator, reduce kappa or use an implicit method")]
    StepUnderflow { tau: f64, h: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Json(_) | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

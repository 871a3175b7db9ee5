use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("fixed-point iteration did not converge after {iterations} sweeps (last sup-change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("iteration lost monotonicity at node {index} (decrease {decrease:e})")]
    NonMonotone { index: usize, decrease: f64 },

    #[error("assumption on the cash leg fails at s0 = {s0}: g - s0 * dg = {cash0} < 0 with a positive rate")]
    AssumptionViolated { s0: f64, cash0: f64 },

    #[error("Feller condition violated: 2 kappa theta = {lhs} <= xi^2 = {rhs}")]
    Feller { lhs: f64, rhs: f64 },

    #[error("CFL condition violated: dt = {dt:e} > dy^2 / v_hi^2 = {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("array length mismatch: {0}")]
    Mismatch(String),

    #[error("sample off the law's support: {0}")]
    OffSupport(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Errors that stem from user input rather than from the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidParameter(_)
                | Error::Precondition(_)
                | Error::AssumptionViolated { .. }
                | Error::Feller { .. }
                | Error::Cfl { .. }
                | Error::Mismatch(_)
                | Error::Json(_)
        )
    }
}

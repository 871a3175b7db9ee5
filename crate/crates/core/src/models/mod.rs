//! Stochastic-volatility markets `dS = S (r dt + nu dW)` and the
//! volatility-steering experiment.
//!
//! All simulators share one time grid and draw each path from its own
//! random stream, so batches are reproducible across thread counts.

mod fbm;
mod io;
mod sim;
mod steer;

pub use fbm::{fbm_covariance, fbm_sample, FbmMethod};
pub use io::{read_binary, write_binary, write_csv};
pub use sim::{for_each_path, simulate, PathBatch, PathView};
pub use steer::{steer_volatility, SteerReport, SteerTarget};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic short rate, constant or piecewise constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateCurve {
    Constant(f64),
    /// `rates[i]` applies on `[times[i], times[i+1])`, the last one forever.
    Piecewise { times: Vec<f64>, rates: Vec<f64> },
}

impl Default for RateCurve {
    fn default() -> Self {
        RateCurve::Constant(0.0)
    }
}

impl RateCurve {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateCurve::Constant(r) => *r,
            RateCurve::Piecewise { times, rates } => {
                let i = times.partition_point(|&s| s <= t).saturating_sub(1);
                rates[i]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            RateCurve::Constant(r) => *r == 0.0,
            RateCurve::Piecewise { rates, .. } => rates.iter().all(|&r| r == 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            RateCurve::Constant(r) => r.is_finite() && *r >= 0.0,
            RateCurve::Piecewise { times, rates } => {
                !times.is_empty()
                    && times.len() == rates.len()
                    && times[0] <= 0.0
                    && times.windows(2).all(|w| w[0] < w[1])
                    && rates.iter().all(|r| r.is_finite() && *r >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "rates must be finite and non-negative, knots increasing from 0".into(),
            ))
        }
    }
}

/// Volatility dynamics. `U` denotes the factor driving `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Dynamics {
    /// `dU = kappa (theta - U) dt + xi sqrt(U) dW^U`, `nu = sqrt(U)`.
    Heston { kappa: f64, theta: f64, xi: f64, v0: f64 },
    /// `dU = U (kappa dt + theta dW^U)`, `nu = sqrt(U)`.
    HullWhite { kappa: f64, theta: f64, u0: f64 },
    /// `dU = -kappa U dt + theta dW^U`, `nu = lambda e^U`.
    Scott { lambda: f64, kappa: f64, theta: f64, u0: f64 },
    /// `nu = nu0 exp(kappa U)` with `U` a fractional Ornstein-Uhlenbeck
    /// process of Hurst index `hurst` and mean reversion `lambda`.
    RoughFou { hurst: f64, lambda: f64, kappa: f64, nu0: f64 },
}

/// A market model: spot, rate, horizon, spot/vol correlation and dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub s0: f64,
    #[serde(default)]
    pub r: RateCurve,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Correlation between the spot driver `W` and the volatility driver.
    #[serde(default)]
    pub rho: f64,
    #[serde(flatten)]
    pub dynamics: Dynamics,
}

impl ModelSpec {
    /// Heston with `kappa = 2, theta = 0.09, xi = 0.3, rho = -0.5, v0 = 0.09`, `T = 1`.
    pub fn heston_default(s0: f64, r: f64) -> Self {
        ModelSpec {
            s0,
            r: RateCurve::Constant(r),
            horizon: 1.0,
            rho: -0.5,
            dynamics: Dynamics::Heston { kappa: 2.0, theta: 0.09, xi: 0.3, v0: 0.09 },
        }
    }

    pub fn with_dynamics(&self, dynamics: Dynamics) -> Self {
        ModelSpec { dynamics, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return bad("s0 must be positive");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon T must be positive");
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("correlation must lie in (-1, 1)");
        }
        self.r.validate()?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match self.dynamics {
            Dynamics::Heston { kappa, theta, xi, v0 } => {
                if !(pos(kappa) && pos(theta) && pos(v0) && xi.is_finite() && xi >= 0.0) {
                    return bad("Heston needs kappa, theta, v0 > 0 and xi >= 0");
                }
                if !feller_check(kappa, theta, xi) {
                    return Err(Error::Feller { lhs: 2.0 * kappa * theta, rhs: xi * xi });
                }
            }
            Dynamics::HullWhite { kappa, theta, u0 } => {
                if !(kappa.is_finite() && theta.is_finite() && pos(u0)) {
                    return bad("Hull-White needs finite kappa, theta and u0 > 0");
                }
            }
            Dynamics::Scott { lambda, kappa, theta, u0 } => {
                if !(pos(lambda) && pos(kappa) && pos(theta) && u0.is_finite()) {
                    return bad("Scott needs lambda, kappa, theta > 0");
                }
            }
            Dynamics::RoughFou { hurst, lambda, kappa, nu0 } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return bad("Hurst index must lie in (0, 1)");
                }
                if !(pos(lambda) && pos(kappa) && pos(nu0)) {
                    return bad("rough model needs lambda, kappa, nu0 > 0");
                }
            }
        }
        Ok(())
    }
}

/// `2 kappa theta > xi^2`, which keeps the Heston variance positive.
pub fn feller_check(kappa: f64, theta: f64, xi: f64) -> bool {
    2.0 * kappa * theta > xi * xi
}

//! The cheapest trivial hedge: hold `dg(S0)` shares financed from the bank
//! until the spot leaves `K_{S0}`, then cancel.

use serde::Serialize;

use crate::envelope::{EnvelopeView, ExitInterval};
use crate::error::{Error, Result};
use crate::payoff::{default_probe, GamePayoffPair};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionReason {
    ZeroRate,
    /// `g(s0) = f2(s0)`: the hedge cancels at once.
    Contact,
    /// The bank-account leg `g - s0 dg` is non-negative.
    NonNegativeCash,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub ok: bool,
    pub reason: AssumptionReason,
    pub cash0: f64,
    /// `f2 - f1` is a positive constant.
    pub constant_penalty: bool,
    /// `sup f2' <= 0`.
    pub f2_nonincreasing: bool,
    /// `sup f1' = inf`.
    pub f1_slope_unbounded: bool,
}

/// Whether the hedge is safe with a positive interest rate.
///
/// With `r > 0` the bank leg grows, which only helps when it is long cash.
pub fn check_assumption<T: Scalar, E: EnvelopeView<T>>(
    env: &E,
    pair: &GamePayoffPair<T>,
    s0: T,
    rate_is_zero: bool,
) -> Result<AssumptionCheck> {
    let contact = env.is_contact(s0)?;
    let cash0 = if contact { env.value(s0)? } else { env.value(s0)? - s0 * env.right_derivative(s0)? };
    let tol = T::lit(1e-12) * (T::one() + env.value(s0)?.abs());
    let reason = if rate_is_zero {
        AssumptionReason::ZeroRate
    } else if contact {
        AssumptionReason::Contact
    } else if cash0 >= -tol {
        AssumptionReason::NonNegativeCash
    } else {
        AssumptionReason::Violated
    };
    let probe = default_probe(pair, s0);
    Ok(AssumptionCheck {
        ok: reason != AssumptionReason::Violated,
        reason,
        cash0: cash0.as_f64(),
        constant_penalty: pair.constant_penalty(&probe).is_some(),
        f2_nonincreasing: pair.f2.sup_slope() <= T::zero(),
        f1_slope_unbounded: pair.f1.sup_slope().is_infinite(),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HedgeOptions {
    /// Return the hedge even when the assumption check fails.
    pub allow_override: bool,
    pub rate_is_zero: bool,
}

/// Buy-and-hold position plus cancellation on exit from `exit_interval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialHedge<T> {
    pub initial_capital: T,
    pub gamma: T,
    pub cash0: T,
    pub exit_interval: ExitInterval<T>,
    pub s0: T,
    pub assumption_ok: bool,
    pub override_used: bool,
}

pub fn build_hedge<T: Scalar, E: EnvelopeView<T>>(
    env: &E,
    pair: &GamePayoffPair<T>,
    s0: T,
    opts: HedgeOptions,
) -> Result<TrivialHedge<T>> {
    let capital = env.value(s0)?;
    let exit_interval = env.stop_interval(s0)?;
    let gamma = if exit_interval.is_empty() { T::zero() } else { env.right_derivative(s0)? };
    let cash0 = capital - s0 * gamma;
    let check = check_assumption(env, pair, s0, opts.rate_is_zero)?;
    if !check.ok && !opts.allow_override {
        return Err(Error::AssumptionViolated { s0: s0.as_f64(), cash0: cash0.as_f64() });
    }
    Ok(TrivialHedge {
        initial_capital: capital,
        gamma,
        cash0,
        exit_interval,
        s0,
        assumption_ok: check.ok,
        override_used: !check.ok,
    })
}

/// Value of the buy-and-hold portfolio: `b_ratio cash0 + gamma s`.
pub fn portfolio_value<T: Scalar>(hedge: &TrivialHedge<T>, s: T, b_ratio: T) -> T {
    b_ratio * hedge.cash0 + hedge.gamma * s
}

/// Audit of the super-replication inequality along one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathCheck {
    pub slack_min: f64,
    pub sigma_index: usize,
    /// Distance of `S` beyond the exit interval at the cancellation index.
    pub overshoot: f64,
    pub tolerance: f64,
    pub violated: bool,
}

/// Checks `Z_{t ^ sigma} >= f2(S_sigma) 1{sigma < t} + f1(S_t) 1{t <= sigma}`
/// at every grid time.
///
/// `sigma` is the first grid index at which `S` leaves the open exit
/// interval (0 when it is empty, the last index if never). Grid times before
/// `sigma` are held to `1e-9 (1 + capital)`; at `sigma` itself the
/// tolerance adds `L * overshoot`, the error of detecting a continuous exit
/// on a grid.
pub fn verify_path<T: Scalar>(
    hedge: &TrivialHedge<T>,
    pair: &GamePayoffPair<T>,
    s_path: &[T],
    b_path: &[T],
) -> Result<PathCheck> {
    if s_path.is_empty() || s_path.len() != b_path.len() {
        return Err(Error::Mismatch(format!(
            "price path has {} points, bank path {}",
            s_path.len(),
            b_path.len()
        )));
    }
    let k = &hedge.exit_interval;
    let sigma = if k.is_empty() {
        0
    } else {
        s_path.iter().position(|&s| !k.contains(s)).unwrap_or(s_path.len() - 1)
    };
    let z = |j: usize| portfolio_value(hedge, s_path[j], b_path[j]);
    let mut before = T::infinity();
    for j in 0..sigma {
        before = before.min(z(j) - pair.f1.value(s_path[j]));
    }
    let mut at_exit = z(sigma) - pair.f1.value(s_path[sigma]);
    if sigma + 1 < s_path.len() {
        at_exit = at_exit.min(z(sigma) - pair.f2.value(s_path[sigma]));
    }
    let slack_min = before.min(at_exit);
    let overshoot = k.overshoot(s_path[sigma]);
    let float_tol = T::lit(1e-9) * (T::one() + hedge.initial_capital.abs());
    let tolerance = float_tol + pair.growth * overshoot;
    Ok(PathCheck {
        slack_min: slack_min.as_f64(),
        sigma_index: sigma,
        overshoot: overshoot.as_f64(),
        tolerance: tolerance.as_f64(),
        violated: before < -float_tol || at_exit < -tolerance,
    })
}

/// Aggregate of [`PathCheck`]s over a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperRepReport {
    pub n_paths: usize,
    pub n_violations: usize,
    pub violation_fraction: f64,
    pub min_slack: f64,
    /// Largest per-path tolerance applied.
    pub slack_tolerance: f64,
    pub per_path_sigma_hat: Vec<usize>,
    #[serde(skip)]
    pub per_path_slack: Vec<f64>,
}

impl SuperRepReport {
    /// Folds checks in path order, so the result does not depend on how
    /// they were produced.
    pub fn from_checks(checks: &[PathCheck]) -> Self {
        let n_violations = checks.iter().filter(|c| c.violated).count();
        let n = checks.len();
        SuperRepReport {
            n_paths: n,
            n_violations,
            violation_fraction: if n == 0 { 0.0 } else { n_violations as f64 / n as f64 },
            min_slack: checks.iter().map(|c| c.slack_min).fold(f64::INFINITY, f64::min),
            slack_tolerance: checks.iter().map(|c| c.tolerance).fold(0.0, f64::max),
            per_path_sigma_hat: checks.iter().map(|c| c.sigma_index).collect(),
            per_path_slack: checks.iter().map(|c| c.slack_min).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::ConvexEnvelope;
    use crate::payoff::PayoffFn;

    fn pair(f1: PayoffFn<f64>, f2: PayoffFn<f64>) -> GamePayoffPair<f64> {
        GamePayoffPair::new(f1, f2, 4.0).unwrap()
    }

    fn call_pair(c: f64, delta: f64) -> GamePayoffPair<f64> {
        pair(PayoffFn::call(100.0, 1.0, 0.0).unwrap(), PayoffFn::call(100.0, c, delta).unwrap())
    }

    fn put_pair(delta: f64) -> GamePayoffPair<f64> {
        pair(PayoffFn::put(100.0, 1.0, 0.0).unwrap(), PayoffFn::put(100.0, 1.0, delta).unwrap())
    }

    fn hedge_for(p: &GamePayoffPair<f64>, s0: f64, opts: HedgeOptions) -> Result<TrivialHedge<f64>> {
        build_hedge(&ConvexEnvelope::new(p).unwrap(), p, s0, opts)
    }

    #[test]
    fn call_hedge() {
        let h = hedge_for(&call_pair(1.0, 10.0), 80.0, HedgeOptions::default()).unwrap();
        assert_eq!((h.initial_capital, h.gamma, h.cash0), (8.0, 0.1, 0.0));
        assert_eq!(h.exit_interval, ExitInterval::new(f64::NEG_INFINITY, 100.0));
        assert!((portfolio_value(&h, 100.0, 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn put_hedge() {
        let p = put_pair(10.0);
        let h = hedge_for(&p, 80.0, HedgeOptions::default()).unwrap();
        assert!((h.initial_capital - 28.0).abs() < 1e-12);
        assert_eq!(h.gamma, -0.9);
        assert!((portfolio_value(&h, 100.0, 1.0) - 10.0).abs() < 1e-12);
        let env = ConvexEnvelope::new(&p).unwrap();
        let check = check_assumption(&env, &p, 80.0, false).unwrap();
        assert!(check.ok && check.f2_nonincreasing && check.constant_penalty);
    }

    #[test]
    fn contact_hedge_cancels_at_once() {
        let p = put_pair(10.0);
        let h = hedge_for(&p, 120.0, HedgeOptions::default()).unwrap();
        assert_eq!((h.initial_capital, h.gamma), (10.0, 0.0));
        assert!(h.exit_interval.is_empty());
        let check = verify_path(&h, &p, &[120.0, 90.0, 130.0], &[1.0; 3]).unwrap();
        assert_eq!(check.sigma_index, 0);
        assert!(!check.violated);
    }

    #[test]
    fn steep_call_needs_zero_rate() {
        let p = call_pair(2.0, 0.0);
        let env = ConvexEnvelope::new(&p).unwrap();
        let check = check_assumption(&env, &p, 120.0, false).unwrap();
        assert!(!check.ok);
        assert_eq!(check.reason, AssumptionReason::Violated);
        assert!(check_assumption(&env, &p, 120.0, true).unwrap().ok);
        assert!(matches!(
            hedge_for(&p, 120.0, HedgeOptions::default()),
            Err(Error::AssumptionViolated { .. })
        ));
        let h = hedge_for(&p, 120.0, HedgeOptions { allow_override: true, rate_is_zero: false }).unwrap();
        assert!(h.override_used && !h.assumption_ok);
        // the bank leg owes 100 and grows; S stays above the strike
        let growth = [1.0, 0.05f64.exp()];
        let check = verify_path(&h, &p, &[120.0, 130.0], &growth).unwrap();
        assert!(check.violated);
        assert!((check.slack_min - 100.0 * (1.0 - 0.05f64.exp())).abs() < 1e-9);
    }

    #[test]
    fn constant_path_keeps_the_sandwich_gap() {
        let p = call_pair(1.0, 10.0);
        let h = hedge_for(&p, 80.0, HedgeOptions::default()).unwrap();
        let check = verify_path(&h, &p, &[80.0; 5], &[1.0; 5]).unwrap();
        assert_eq!(check.sigma_index, 4);
        assert!((check.slack_min - 8.0).abs() < 1e-12);
    }

    #[test]
    fn overshoot_is_budgeted() {
        let p = call_pair(1.0, 10.0);
        let h = hedge_for(&p, 80.0, HedgeOptions::default()).unwrap();
        let check = verify_path(&h, &p, &[80.0, 95.0, 101.0, 150.0], &[1.0; 4]).unwrap();
        assert_eq!(check.sigma_index, 2);
        assert!((check.overshoot - 1.0).abs() < 1e-12);
        assert!(check.slack_min < 0.0 && !check.violated);
    }

    #[test]
    fn mismatched_paths_are_rejected() {
        let p = call_pair(1.0, 10.0);
        let h = hedge_for(&p, 80.0, HedgeOptions::default()).unwrap();
        assert!(matches!(verify_path(&h, &p, &[80.0, 81.0], &[1.0]), Err(Error::Mismatch(_))));
    }

    #[test]
    fn report_reduction() {
        let mk = |slack: f64, violated| PathCheck {
            slack_min: slack,
            sigma_index: 1,
            overshoot: 0.0,
            tolerance: 1e-9,
            violated,
        };
        let r = SuperRepReport::from_checks(&[mk(0.5, false), mk(-1.0, true)]);
        assert_eq!((r.n_paths, r.n_violations, r.violation_fraction, r.min_slack), (2, 1, 0.5, -1.0));
    }
}

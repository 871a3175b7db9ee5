//! End-to-end audits: the trivial hedge against simulated paths, the
//! positive-rate counterexample, and the lattice lower bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{g_grid, ConvexEnvelope, EnvelopeView, GridOptions};
use crate::error::Result;
use crate::hedge::{build_hedge, verify_path, HedgeOptions, PathCheck, SuperRepReport, TrivialHedge};
use crate::models::{for_each_path, ModelSpec, RateCurve};
use crate::payoff::{GamePayoffPair, PayoffFn};
use crate::stopvalue::{solve_g_lattice, LatticeSpec};

/// Envelope value and hedge for any valid pair: closed form when both
/// payoffs are convex, the grid solver otherwise.
pub fn hedge_for(pair: &GamePayoffPair<f64>, s0: f64, opts: HedgeOptions) -> Result<TrivialHedge<f64>> {
    if pair.is_convex() {
        build_hedge(&ConvexEnvelope::new(pair)?, pair, s0, opts)
    } else {
        build_hedge(&g_grid(pair, &GridOptions::around(pair, s0))?, pair, s0, opts)
    }
}

/// `g(s0)` by the same rule as [`hedge_for`].
pub fn envelope_value(pair: &GamePayoffPair<f64>, s0: f64) -> Result<f64> {
    if pair.is_convex() {
        ConvexEnvelope::new(pair)?.value(s0)
    } else {
        g_grid(pair, &GridOptions::around(pair, s0))?.value(s0)
    }
}

/// Audits one hedge per pair on the same simulated paths.
pub fn mc_superreplication_many(
    spec: &ModelSpec,
    pairs: &[GamePayoffPair<f64>],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    allow_override: bool,
) -> Result<Vec<SuperRepReport>> {
    let opts = HedgeOptions { allow_override, rate_is_zero: spec.r.is_zero() };
    let hedges = pairs.iter().map(|p| hedge_for(p, spec.s0, opts)).collect::<Result<Vec<_>>>()?;
    let checks: Vec<Vec<PathCheck>> = for_each_path(spec, n_steps, n_paths, seed, |_, path| {
        hedges
            .iter()
            .zip(pairs)
            .map(|(h, pair)| verify_path(h, pair, path.s, path.b))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .collect::<Result<_>>()?;
    Ok((0..pairs.len())
        .map(|k| SuperRepReport::from_checks(&checks.iter().map(|c| c[k]).collect::<Vec<_>>()))
        .collect())
}

pub fn mc_superreplication(
    spec: &ModelSpec,
    pair: &GamePayoffPair<f64>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    allow_override: bool,
) -> Result<SuperRepReport> {
    Ok(mc_superreplication_many(spec, std::slice::from_ref(pair), n_paths, n_steps, seed, allow_override)?.remove(0))
}

/// The steep-cancellation call with a positive rate: holder gets
/// `(S - 100)+`, the seller pays `2 (S - 100)+ + penalty` to cancel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    #[serde(default = "CounterexampleConfig::default_rate")]
    pub r: f64,
    #[serde(default)]
    pub penalty: f64,
    #[serde(default = "CounterexampleConfig::default_s0")]
    pub s0: f64,
    #[serde(default = "CounterexampleConfig::default_paths")]
    pub n_paths: usize,
    #[serde(default = "CounterexampleConfig::default_steps")]
    pub n_steps: usize,
}

impl CounterexampleConfig {
    fn default_rate() -> f64 {
        0.05
    }
    fn default_s0() -> f64 {
        120.0
    }
    fn default_paths() -> usize {
        10_000
    }
    fn default_steps() -> usize {
        512
    }

    pub fn pair(&self) -> Result<GamePayoffPair<f64>> {
        GamePayoffPair::new(PayoffFn::call(100.0, 1.0, 0.0)?, PayoffFn::call(100.0, 2.0, self.penalty)?, 4.0)
    }
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { r: 0.05, penalty: 0.0, s0: 120.0, n_paths: 10_000, n_steps: 512 }
    }
}

/// Runs the counterexample under the default Heston model with the
/// assumption check overridden.
pub fn counterexample_run(config: &CounterexampleConfig, seed: u64) -> Result<SuperRepReport> {
    let mut spec = ModelSpec::heston_default(config.s0, config.r);
    spec.r = RateCurve::Constant(config.r);
    mc_superreplication(&spec, &config.pair()?, config.n_paths, config.n_steps, seed, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub v_hi: f64,
    pub lattice: f64,
    pub g: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundTable {
    pub rows: Vec<LowerBoundRow>,
    /// The largest cap is within 1% of `1 + g` and the gaps increase with
    /// the cap.
    pub pass: bool,
}

/// Solves the lattice for each cap (in parallel) and compares with `g(s0)`.
/// `grid` fixes the spatial grid and horizon; time steps follow each cap.
pub fn lower_bound_check(
    pair: &GamePayoffPair<f64>,
    s0: f64,
    v_hi_list: &[f64],
    grid: &LatticeSpec,
) -> Result<LowerBoundTable> {
    let g = envelope_value(pair, s0)?;
    let rows = v_hi_list
        .par_iter()
        .map(|&v_hi| {
            let lattice = solve_g_lattice(pair, &grid.with(grid.horizon, v_hi)?)?.value_at(s0)?;
            Ok(LowerBoundRow { v_hi, lattice, g, gap: lattice - g })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<&LowerBoundRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.v_hi.total_cmp(&b.v_hi));
    let tol = 1e-6 * (1.0 + g.abs());
    let monotone = sorted.windows(2).all(|w| w[1].gap >= w[0].gap - tol);
    let close = sorted.last().is_some_and(|r| r.gap >= -0.01 * (1.0 + g.abs()));
    Ok(LowerBoundTable { rows, pass: monotone && close })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call_pair() -> GamePayoffPair<f64> {
        GamePayoffPair::new(PayoffFn::call(100.0, 1.0, 0.0).unwrap(), PayoffFn::call(100.0, 1.0, 10.0).unwrap(), 4.0)
            .unwrap()
    }

    #[test]
    fn heston_call_is_super_replicated() {
        let spec = ModelSpec::heston_default(80.0, 0.0);
        let rep = mc_superreplication(&spec, &call_pair(), 500, 128, 5, false).unwrap();
        assert_eq!(rep.n_violations, 0);
        assert_eq!(rep.per_path_sigma_hat.len(), 500);
    }

    #[test]
    fn counterexample_flags_almost_every_path() {
        let cfg = CounterexampleConfig { n_paths: 500, n_steps: 64, ..Default::default() };
        assert!(counterexample_run(&cfg, 1).unwrap().violation_fraction >= 0.99);
        let zero = CounterexampleConfig { r: 0.0, ..cfg.clone() };
        assert_eq!(counterexample_run(&zero, 1).unwrap().n_violations, 0);
        let full = CounterexampleConfig { penalty: 100.0, ..cfg };
        assert_eq!(counterexample_run(&full, 1).unwrap().n_violations, 0);
    }

    #[test]
    fn positive_rate_without_override_is_refused() {
        let spec = ModelSpec::heston_default(120.0, 0.05);
        let pair = CounterexampleConfig::default().pair().unwrap();
        assert!(mc_superreplication(&spec, &pair, 10, 8, 1, false).is_err());
    }

    #[test]
    fn identical_payoffs_have_zero_gap() {
        let f = PayoffFn::call(100.0, 1.0, 0.0).unwrap();
        let pair = GamePayoffPair::new(f.clone(), f, 4.0).unwrap();
        let mut grid = LatticeSpec::around(&pair, 80.0, 1.0, 2.0).unwrap();
        grid.n_y = 200;
        let table = lower_bound_check(&pair, 80.0, &[1.0, 2.0], &grid).unwrap();
        assert!(table.rows.iter().all(|r| r.gap.abs() < 1e-12));
        assert!(table.pass);
    }
}

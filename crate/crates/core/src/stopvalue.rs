//! Optimal stopping under volatility uncertainty on an explicit log-price
//! lattice.
//!
//! The controller picks the volatility in `[v_lo, v_hi]` to maximise, the
//! stopper picks a cancellation time to minimise: stopping early pays `f2`,
//! reaching the horizon pays `f1`. For this generator the maximising
//! volatility is always an endpoint, chosen by the sign of the discrete
//! curvature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payoff::GamePayoffPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_y: usize,
    pub horizon: f64,
    pub n_t: usize,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Number of stored time slices, including `t = 0` and the horizon.
    #[serde(default = "LatticeSpec::default_snapshots")]
    pub snapshots: usize,
}

impl LatticeSpec {
    fn default_snapshots() -> usize {
        11
    }

    /// A lattice with the fewest time steps the stability bound allows.
    pub fn new(x_min: f64, x_max: f64, n_y: usize, horizon: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        let mut spec = LatticeSpec { x_min, x_max, n_y, horizon, n_t: 1, v_lo, v_hi, snapshots: 11 };
        spec.check_shape()?;
        spec.n_t = spec.min_steps();
        Ok(spec)
    }

    /// Default grid for a pair and spot: the spot and every kink, widened by
    /// five standard deviations of log-price at `v_hi` (plus the drift
    /// `v_hi^2 horizon / 2` on the left), with a log step near 0.02 and
    /// `v_lo = 1e-3`. The kink closest to the spot (or the spot itself) sits
    /// on a node.
    pub fn around(pair: &GamePayoffPair<f64>, x0: f64, horizon: f64, v_hi: f64) -> Result<Self> {
        let pts: Vec<f64> = pair.kinks().into_iter().filter(|k| *k > 0.0).chain([x0]).collect();
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().cloned().fold(0.0, f64::max);
        let sd = v_hi * horizon.sqrt();
        let (y_lo, y_hi) = (lo.ln() - 0.5 * sd * sd - 5.0 * sd - 1.0, hi.ln() + 5.0 * sd + 1.0);
        let n_y = (((y_hi - y_lo) / 0.02).ceil() as usize + 1).max(200);
        let dy = (y_hi - y_lo) / (n_y - 1) as f64;
        let anchor = pts.iter().map(|p| p.ln()).min_by(|a, b| (a - x0.ln()).abs().total_cmp(&(b - x0.ln()).abs())).unwrap();
        let y_lo = anchor - ((anchor - y_lo) / dy).round() * dy;
        LatticeSpec::new(y_lo.exp(), (y_lo + dy * (n_y - 1) as f64).exp(), n_y, horizon, 1e-3, v_hi)
    }

    /// Same spatial grid, another horizon or volatility cap, re-resolved in time.
    pub fn with(&self, horizon: f64, v_hi: f64) -> Result<Self> {
        let mut spec = LatticeSpec { horizon, v_hi, n_t: 1, ..self.clone() };
        spec.check_shape()?;
        spec.n_t = spec.min_steps();
        Ok(spec)
    }

    pub fn dy(&self) -> f64 {
        (self.x_max.ln() - self.x_min.ln()) / (self.n_y - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    fn min_steps(&self) -> usize {
        let dy = self.dy();
        ((self.horizon * self.v_hi * self.v_hi / (dy * dy)).ceil() as usize).max(1)
    }

    fn check_shape(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.x_min > 0.0 && self.x_max > self.x_min && self.x_max.is_finite()) {
            return bad("need 0 < x_min < x_max");
        }
        if self.n_y < 3 {
            return bad("need at least 3 price nodes");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.v_lo >= 0.0 && self.v_hi > self.v_lo && self.v_hi.is_finite()) {
            return bad("need 0 <= v_lo < v_hi");
        }
        if self.dy() > 2.0 {
            return bad("log-price step above 2 breaks monotonicity");
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if self.snapshots < 2 {
            return Err(Error::InvalidParameter("need at least 2 snapshots".into()));
        }
        let bound = self.dy() * self.dy() / (self.v_hi * self.v_hi);
        if self.dt() > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: self.dt(), bound });
        }
        Ok(())
    }
}

/// Values and maximising volatilities at the stored time slices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSurface {
    pub xs: Vec<f64>,
    /// Times of the stored slices, increasing from 0 to the horizon.
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Volatility chosen on the step into each slice; the horizon slice
    /// repeats `v_lo`.
    pub feedback_vol: Vec<Vec<f64>>,
    pub spec: LatticeSpec,
}

impl ValueSurface {
    /// `V(0, x)` by linear interpolation in price between the bracketing
    /// nodes, so convex payoffs stay below the interpolant.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let y = x.ln();
        let y0 = self.spec.x_min.ln();
        let pos = (y - y0) / self.spec.dy();
        if !(pos >= 0.0 && pos <= (self.xs.len() - 1) as f64) {
            return Err(Error::Domain(format!("{x} outside the lattice")));
        }
        let i = (pos.floor() as usize).min(self.xs.len() - 2);
        let w = ((x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])).clamp(0.0, 1.0);
        Ok((1.0 - w) * self.values[0][i] + w * self.values[0][i + 1])
    }
}

fn slice_steps(n_t: usize, snapshots: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..snapshots)
        .map(|j| ((j as f64) * n_t as f64 / (snapshots - 1) as f64).round() as usize)
        .collect();
    s.dedup();
    s
}

pub fn solve_g_lattice(pair: &GamePayoffPair<f64>, spec: &LatticeSpec) -> Result<ValueSurface> {
    pair.validate_params()?;
    spec.validate()?;
    let n = spec.n_y;
    let dy = spec.dy();
    let dt = spec.dt();
    let y0 = spec.x_min.ln();
    let xs: Vec<f64> = (0..n).map(|i| (y0 + dy * i as f64).exp()).collect();
    let f1: Vec<f64> = xs.iter().map(|&x| pair.f1.value(x)).collect();
    let f2: Vec<f64> = xs.iter().map(|&x| pair.f2.value(x)).collect();
    if let Some(i) = (0..n).find(|&i| !(f1[i].is_finite() && f2[i].is_finite())) {
        return Err(Error::Domain(format!("payoff not finite at x = {}", xs[i])));
    }
    // Edges extrapolate linearly in price, clamped between the payoffs.
    let (shrink, grow) = ((-dy).exp(), dy.exp());

    let keep = slice_steps(spec.n_t, spec.snapshots);
    let mut values = vec![Vec::new(); keep.len()];
    let mut feedback = vec![Vec::new(); keep.len()];
    let mut slot = keep.len() - 1;
    values[slot] = f1.clone();
    feedback[slot] = vec![spec.v_lo; n];

    let (lo2, hi2) = (0.5 * spec.v_lo * spec.v_lo * dt, 0.5 * spec.v_hi * spec.v_hi * dt);
    let (inv_dy2, inv_2dy) = (1.0 / (dy * dy), 0.5 / dy);
    let mut cur = f1.clone();
    let mut next = vec![0.0; n];
    let mut chose_hi = vec![false; n];
    for step in (0..spec.n_t).rev() {
        for i in 1..n - 1 {
            let q = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) * inv_dy2 - (cur[i + 1] - cur[i - 1]) * inv_2dy;
            let hi = q > 0.0;
            chose_hi[i] = hi;
            next[i] = f2[i].min(cur[i] + if hi { hi2 } else { lo2 } * q);
        }
        next[0] = (next[1] - (next[2] - next[1]) * shrink).max(f1[0]).min(f2[0]);
        next[n - 1] = (next[n - 2] + (next[n - 2] - next[n - 3]) * grow).max(f1[n - 1]).min(f2[n - 1]);
        chose_hi[0] = chose_hi[1];
        chose_hi[n - 1] = chose_hi[n - 2];
        std::mem::swap(&mut cur, &mut next);
        if slot > 0 && step == keep[slot - 1] {
            slot -= 1;
            values[slot] = cur.clone();
            feedback[slot] = chose_hi.iter().map(|&h| if h { spec.v_hi } else { spec.v_lo }).collect();
        }
    }
    Ok(ValueSurface {
        xs,
        times: keep.iter().map(|&k| k as f64 * dt).collect(),
        values,
        feedback_vol: feedback,
        spec: spec.clone(),
    })
}

/// `|V_{u1}(0, x0) - V_{u2}(0, x0)|` on the spatial grid of `spec`.
pub fn horizon_invariance_gap(pair: &GamePayoffPair<f64>, spec: &LatticeSpec, x0: f64, u1: f64, u2: f64) -> Result<f64> {
    if !(u1 > 0.0 && u2 > 0.0) {
        return Err(Error::InvalidParameter("horizons must be positive".into()));
    }
    let (a, b) = rayon::join(
        || solve_g_lattice(pair, &spec.with(u1, spec.v_hi)?)?.value_at(x0),
        || solve_g_lattice(pair, &spec.with(u2, spec.v_hi)?)?.value_at(x0),
    );
    Ok((a? - b?).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackTable {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub vol: Vec<Vec<f64>>,
    /// The control at `t = 0`, the volatility the hedger should expect the
    /// market to be steered towards.
    pub initial: Vec<f64>,
    pub v_lo: f64,
    pub v_hi: f64,
}

/// The maximising volatility as a feedback table; needs `v_lo > 0` so that
/// the control and its reciprocal stay bounded.
pub fn extract_feedback_vol(surface: &ValueSurface) -> Result<FeedbackTable> {
    let (v_lo, v_hi) = (surface.spec.v_lo, surface.spec.v_hi);
    if !(v_lo > 0.0) {
        return Err(Error::InvalidParameter("v_lo must be positive for a bounded feedback control".into()));
    }
    let vol: Vec<Vec<f64>> = surface
        .feedback_vol
        .iter()
        .map(|row| row.iter().map(|v| v.clamp(v_lo, v_hi)).collect())
        .collect();
    Ok(FeedbackTable { times: surface.times.clone(), xs: surface.xs.clone(), initial: vol[0].clone(), vol, v_lo, v_hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payoff::PayoffFn;

    fn call_pair() -> GamePayoffPair<f64> {
        GamePayoffPair::new(PayoffFn::call(100.0, 1.0, 0.0).unwrap(), PayoffFn::call(100.0, 1.0, 10.0).unwrap(), 4.0)
            .unwrap()
    }

    fn small(v_hi: f64) -> LatticeSpec {
        LatticeSpec::new(1.0, 3000.0, 300, 1.0, 1e-3, v_hi).unwrap()
    }

    #[test]
    fn cfl_is_enforced() {
        let mut s = LatticeSpec::new(1.0, 3000.0, 200, 1.0, 0.0, 2.0).unwrap();
        s.n_t /= 2;
        assert!(matches!(s.validate(), Err(Error::Cfl { .. })));
        assert!(LatticeSpec::new(1.0, 3000.0, 200, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn identical_payoffs_bind_at_once() {
        let f = PayoffFn::put(100.0, 1.0, 0.0).unwrap();
        let pair = GamePayoffPair::new(f.clone(), f, 4.0).unwrap();
        let spec = small(2.0);
        let surf = solve_g_lattice(&pair, &spec).unwrap();
        for row in &surf.values {
            for (v, x) in row.iter().zip(&surf.xs) {
                assert_eq!(*v, pair.f1.value(*x));
            }
        }
        assert!(surf.feedback_vol.iter().flatten().all(|&v| v == spec.v_lo || v == spec.v_hi));
        assert_eq!(horizon_invariance_gap(&pair, &spec, 80.0, 0.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn surface_is_sandwiched_and_monotone_in_the_cap() {
        let pair = call_pair();
        let mut last = f64::NEG_INFINITY;
        for v_hi in [1.0, 2.0, 3.0] {
            let surf = solve_g_lattice(&pair, &small(v_hi)).unwrap();
            for row in &surf.values {
                for (v, x) in row.iter().zip(&surf.xs) {
                    assert!(*v <= pair.f2.value(*x));
                    assert!(*v >= pair.f1.value(*x) - 1e-9 * (1.0 + x));
                }
            }
            let v0 = surf.value_at(80.0).unwrap();
            assert!(v0 >= last - 1e-9, "{v0} < {last}");
            last = v0;
        }
    }

    #[test]
    fn feedback_needs_positive_floor() {
        let pair = call_pair();
        let mut spec = small(2.0);
        let surf = solve_g_lattice(&pair, &spec).unwrap();
        let table = extract_feedback_vol(&surf).unwrap();
        assert_eq!(table.initial.len(), spec.n_y);
        spec.v_lo = 0.0;
        let surf = solve_g_lattice(&pair, &spec).unwrap();
        assert!(extract_feedback_vol(&surf).is_err());
    }

    #[test]
    fn curvature_sign_picks_the_volatility() {
        let pair = call_pair();
        let surf = solve_g_lattice(&pair, &small(2.0)).unwrap();
        let i = surf.xs.iter().position(|&x| x > 60.0).unwrap();
        let t = surf.times.len() - 2;
        assert_eq!(surf.feedback_vol[t][i], 2.0);

        let capped = PayoffFn::tabulated(vec![1.0, 50.0, 100.0], vec![1.0, 50.0, 50.0]).unwrap();
        let loose = PayoffFn::tabulated(vec![1.0, 50.0, 100.0], vec![101.0, 150.0, 150.0]).unwrap();
        let pair = GamePayoffPair::new(capped, loose, 4.0).unwrap();
        let surf = solve_g_lattice(&pair, &small(2.0)).unwrap();
        assert!(surf.feedback_vol[0].iter().all(|&v| v == 1e-3));
    }
}

//! Game-option payoffs `f1 <= f2` and the regularity checks the envelope
//! machinery relies on.
//!
//! Every payoff is continuous on `(0, inf)` and extends continuously to `0`,
//! which the envelope uses as its left anchor (`g(0) = f1(0)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn unit<T: Scalar>() -> T {
    T::one()
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

/// A single payoff function of the spot price.
///
/// `Call` is `c (x - K)^+ + delta`, `Put` is `c (K - x)^+ + delta`, `Power`
/// is `c x^p + delta`. `Tabulated` interpolates `(xs, ys)` linearly and
/// extrapolates with the boundary slopes on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub enum PayoffFn<T> {
    Call {
        #[serde(rename = "K")]
        strike: T,
        #[serde(default = "unit")]
        c: T,
        #[serde(default = "zero")]
        delta: T,
    },
    Put {
        #[serde(rename = "K")]
        strike: T,
        #[serde(default = "unit")]
        c: T,
        #[serde(default = "zero")]
        delta: T,
    },
    Power {
        p: T,
        #[serde(default = "unit")]
        c: T,
        #[serde(default = "zero")]
        delta: T,
    },
    Tabulated { xs: Vec<T>, ys: Vec<T> },
}

/// One linear piece `value + slope * (x - start)` valid on `[start, next start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece<T> {
    pub start: T,
    pub value: T,
    pub slope: T,
}

impl<T: Scalar> PayoffFn<T> {
    pub fn call(strike: T, c: T, delta: T) -> Result<Self> {
        let f = PayoffFn::Call { strike, c, delta };
        f.validate()?;
        Ok(f)
    }

    pub fn put(strike: T, c: T, delta: T) -> Result<Self> {
        let f = PayoffFn::Put { strike, c, delta };
        f.validate()?;
        Ok(f)
    }

    pub fn power(p: T, c: T, delta: T) -> Result<Self> {
        let f = PayoffFn::Power { p, c, delta };
        f.validate()?;
        Ok(f)
    }

    pub fn tabulated(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        let f = PayoffFn::Tabulated { xs, ys };
        f.validate()?;
        Ok(f)
    }

    /// Checks the variant's parameter ranges and that the function is
    /// non-negative on `[0, inf)`.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            PayoffFn::Call { strike, c, delta } | PayoffFn::Put { strike, c, delta } => {
                if !(strike.is_finite() && *strike > T::zero()) {
                    return bad(format!("strike must be positive, got {strike}"));
                }
                if !(c.is_finite() && *c >= T::zero()) {
                    return bad(format!("scale c must be non-negative, got {c}"));
                }
                if !(delta.is_finite() && *delta >= T::zero()) {
                    return bad(format!("penalty delta must be non-negative, got {delta}"));
                }
            }
            PayoffFn::Power { p, c, delta } => {
                if !(p.is_finite() && *p > T::one()) {
                    return bad(format!("power exponent must exceed 1, got {p}"));
                }
                if !(c.is_finite() && *c > T::zero()) {
                    return bad(format!("scale c must be positive, got {c}"));
                }
                if !(delta.is_finite() && *delta >= T::zero()) {
                    return bad(format!("penalty delta must be non-negative, got {delta}"));
                }
            }
            PayoffFn::Tabulated { xs, ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return bad(format!(
                        "tabulated payoff needs >= 2 points and equal lengths, got {} and {}",
                        xs.len(),
                        ys.len()
                    ));
                }
                if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
                    return bad("tabulated payoff has non-finite entries".into());
                }
                if xs[0] <= T::zero() {
                    return bad("tabulated abscissae must be positive".into());
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("tabulated abscissae must be strictly increasing".into());
                }
                if ys.iter().any(|y| *y < T::zero()) {
                    return bad("tabulated values must be non-negative".into());
                }
                if self.value(T::zero()) < T::zero() {
                    return bad("left extrapolation of tabulated payoff turns negative before 0".into());
                }
                if self.asymptotic_slope() < T::zero() {
                    return bad("right extrapolation of tabulated payoff decreases to -inf".into());
                }
            }
        }
        Ok(())
    }

    /// Evaluates the payoff at a positive price.
    pub fn eval(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::Domain(format!("payoff evaluated at non-positive price {x}")));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation on `[0, inf)`; `value(0)` is the continuous extension.
    pub fn value(&self, x: T) -> T {
        match self {
            PayoffFn::Call { strike, c, delta } => *c * (x - *strike).max(T::zero()) + *delta,
            PayoffFn::Put { strike, c, delta } => *c * (*strike - x).max(T::zero()) + *delta,
            PayoffFn::Power { p, c, delta } => *c * x.powf(*p) + *delta,
            PayoffFn::Tabulated { xs, ys } => {
                let n = xs.len();
                // segment whose slope applies at x, boundary segments extended
                let i = xs[1..n - 1].iter().take_while(|xi| **xi <= x).count();
                let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                ys[i] + slope * (x - xs[i])
            }
        }
    }

    /// Value at the origin (continuous extension).
    pub fn at_zero(&self) -> T {
        self.value(T::zero())
    }

    /// Linear pieces covering `[0, inf)` for the piecewise-linear variants.
    pub fn linear_pieces(&self) -> Option<Vec<LinearPiece<T>>> {
        let z = T::zero();
        match self {
            PayoffFn::Call { strike, c, delta } => Some(vec![
                LinearPiece { start: z, value: *delta, slope: z },
                LinearPiece { start: *strike, value: *delta, slope: *c },
            ]),
            PayoffFn::Put { strike, c, delta } => Some(vec![
                LinearPiece { start: z, value: *c * *strike + *delta, slope: -*c },
                LinearPiece { start: *strike, value: *delta, slope: z },
            ]),
            PayoffFn::Power { .. } => None,
            PayoffFn::Tabulated { xs, ys } => {
                let n = xs.len();
                let slope = |i: usize| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                let mut pieces = vec![LinearPiece { start: z, value: self.at_zero(), slope: slope(0) }];
                for i in 1..n - 1 {
                    pieces.push(LinearPiece { start: xs[i], value: ys[i], slope: slope(i) });
                }
                Some(pieces)
            }
        }
    }

    /// Right derivative at `x >= 0`.
    pub fn right_slope(&self, x: T) -> T {
        match self {
            PayoffFn::Power { p, c, .. } => *c * *p * x.powf(*p - T::one()),
            _ => {
                let pieces = self.linear_pieces().expect("piecewise-linear variant");
                pieces
                    .iter()
                    .rev()
                    .find(|pc| pc.start <= x)
                    .unwrap_or(&pieces[0])
                    .slope
            }
        }
    }

    /// `lim_{x -> inf} f'(x)`, possibly `+inf`.
    pub fn asymptotic_slope(&self) -> T {
        match self {
            PayoffFn::Power { .. } => T::infinity(),
            _ => self.linear_pieces().expect("piecewise-linear variant").last().unwrap().slope,
        }
    }

    /// `sup_{x > 0} f'(x)`, possibly `+inf`.
    pub fn sup_slope(&self) -> T {
        match self {
            PayoffFn::Power { .. } => T::infinity(),
            _ => self
                .linear_pieces()
                .expect("piecewise-linear variant")
                .iter()
                .map(|p| p.slope)
                .fold(T::neg_infinity(), T::max),
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(&self) -> Vec<T> {
        match self {
            PayoffFn::Call { strike, .. } | PayoffFn::Put { strike, .. } => vec![*strike],
            PayoffFn::Power { .. } => vec![],
            PayoffFn::Tabulated { xs, .. } => xs[1..xs.len() - 1].to_vec(),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            PayoffFn::Call { c, .. } | PayoffFn::Put { c, .. } => *c >= T::zero(),
            PayoffFn::Power { .. } => true,
            PayoffFn::Tabulated { .. } => {
                let pieces = self.linear_pieces().unwrap();
                let tol = T::lit(1e-12);
                pieces.windows(2).all(|w| w[1].slope >= w[0].slope - tol * (T::one() + w[0].slope.abs()))
            }
        }
    }

    /// `(L~, N)` such that `f(x) <= L~ (1 + x^N)` on `(0, inf)`.
    fn growth_bound(&self) -> (T, T) {
        let floor = T::one() + T::lit(GROWTH_ETA);
        match self {
            PayoffFn::Power { p, c, delta } => (*c + *delta, p.max(floor)),
            _ => {
                // piecewise linear: f(x) <= f(0) + max(slope, 0) x and x <= 1 + x^N
                let a = self.at_zero();
                let b = self.sup_slope().max(T::zero());
                (a + b, floor)
            }
        }
    }
}

/// Excess over 1 of the growth exponent for linearly growing payoffs.
pub const GROWTH_ETA: f64 = 0.01;

/// The game option: buyer receives `f1`, seller cancels paying `f2 >= f1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct GamePayoffPair<T> {
    pub f1: PayoffFn<T>,
    pub f2: PayoffFn<T>,
    /// Growth constant in `|f(x) - f(y)| <= L |x - y| (1 + f(x)/x + f(y)/y)`.
    #[serde(rename = "L")]
    pub growth: T,
}

/// Which check failed first in [`validate_pair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationFailureKind {
    /// `f1(x) > f2(x)`.
    Order,
    /// The growth/regularity bound failed for `f1`.
    GrowthF1,
    /// The growth/regularity bound failed for `f2`.
    GrowthF2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationFailure {
    pub kind: ValidationFailureKind,
    pub x: f64,
    /// Second probe point for the pairwise bound.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub first_failure: Option<ValidationFailure>,
    pub n_probe: usize,
}

impl<T: Scalar> GamePayoffPair<T> {
    pub fn new(f1: PayoffFn<T>, f2: PayoffFn<T>, growth: T) -> Result<Self> {
        let pair = GamePayoffPair { f1, f2, growth };
        pair.validate_params()?;
        Ok(pair)
    }

    /// Parameter checks only; the order and growth conditions are the
    /// business of [`validate_pair`].
    pub fn validate_params(&self) -> Result<()> {
        self.f1.validate()?;
        self.f2.validate()?;
        if !(self.growth.is_finite() && self.growth > T::one()) {
            return Err(Error::InvalidParameter(format!(
                "growth constant L must exceed 1, got {}",
                self.growth
            )));
        }
        Ok(())
    }

    pub fn is_convex(&self) -> bool {
        self.f1.is_convex() && self.f2.is_convex()
    }

    /// Kinks of both payoffs, sorted and de-duplicated.
    pub fn kinks(&self) -> Vec<T> {
        let mut k: Vec<T> = self.f1.kinks().into_iter().chain(self.f2.kinks()).collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k.dedup();
        k
    }

    /// The penalty `f2 - f1` when it is the same positive constant on `probe`.
    pub fn constant_penalty(&self, probe: &[T]) -> Option<T> {
        let d0 = self.f2.at_zero() - self.f1.at_zero();
        let tol = T::lit(1e-12) * (T::one() + d0.abs());
        let all_equal = probe
            .iter()
            .all(|&x| (self.f2.value(x) - self.f1.value(x) - d0).abs() <= tol);
        (all_equal && d0 > T::zero()).then_some(d0)
    }
}

/// Default probe grid: 512 log-spaced points on `[s0 1e-3, s0 1e3]` plus
/// every payoff kink.
pub fn default_probe<T: Scalar>(pair: &GamePayoffPair<T>, s0: T) -> Vec<T> {
    let n = 512;
    let (lo, hi) = ((s0 * T::lit(1e-3)).ln(), (s0 * T::lit(1e3)).ln());
    let mut probe: Vec<T> = (0..n)
        .map(|i| (lo + (hi - lo) * T::lit(i as f64) / T::lit((n - 1) as f64)).exp())
        .collect();
    probe.extend(pair.kinks().into_iter().filter(|k| *k > T::zero()));
    probe.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probe.dedup();
    probe
}

fn growth_holds<T: Scalar>(f: &PayoffFn<T>, l: T, x: T, y: T) -> bool {
    let (fx, fy) = (f.value(x), f.value(y));
    let lhs = (fx - fy).abs();
    let rhs = l * (x - y).abs() * (T::one() + fx / x + fy / y);
    lhs <= rhs * (T::one() + T::lit(1e-12)) + T::lit(1e-12)
}

/// Checks `f1 <= f2` pointwise and the pairwise growth bound for both payoffs
/// on every pair of probe points. Failures are reported, never raised.
pub fn validate_pair<T: Scalar>(pair: &GamePayoffPair<T>, probe: &[T]) -> Result<ValidationReport> {
    if probe.is_empty() || probe.iter().any(|x| !(*x > T::zero())) {
        return Err(Error::Precondition("probe must be non-empty and positive".into()));
    }
    let fail = |kind, x: T, y: Option<T>| ValidationReport {
        pass: false,
        first_failure: Some(ValidationFailure { kind, x: x.as_f64(), y: y.map(|v| v.as_f64()) }),
        n_probe: probe.len(),
    };
    let order_tol = T::lit(1e-12);
    for &x in probe {
        let (a, b) = (pair.f1.value(x), pair.f2.value(x));
        if a > b + order_tol * (T::one() + b.abs()) {
            return Ok(fail(ValidationFailureKind::Order, x, None));
        }
    }
    for (i, &x) in probe.iter().enumerate() {
        for &y in &probe[i + 1..] {
            if !growth_holds(&pair.f1, pair.growth, x, y) {
                return Ok(fail(ValidationFailureKind::GrowthF1, x, Some(y)));
            }
            if !growth_holds(&pair.f2, pair.growth, x, y) {
                return Ok(fail(ValidationFailureKind::GrowthF2, x, Some(y)));
            }
        }
    }
    Ok(ValidationReport { pass: true, first_failure: None, n_probe: probe.len() })
}

/// Polynomial growth bound `f_i(x) <= L~ (1 + x^N)` for both payoffs, `N > 1`.
///
/// `N` is floored at `1.01`; `L~` is floored at 1.
pub fn growth_exponent<T: Scalar>(pair: &GamePayoffPair<T>) -> (T, T) {
    let (l1, n1) = pair.f1.growth_bound();
    let (l2, n2) = pair.f2.growth_bound();
    (l1.max(l2).max(T::one()), n1.max(n2))
}

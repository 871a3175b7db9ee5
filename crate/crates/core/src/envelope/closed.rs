use serde::Serialize;

use super::{EnvelopeView, ExitInterval};
use crate::error::{Error, Result};
use crate::payoff::{GamePayoffPair, PayoffFn};
use crate::scalar::Scalar;

/// Parameters of the closed-form envelope of a convex pair.
///
/// `g` is the line `f1(0) + beta x` up to `a`, follows `f2` on `[a, rho)`
/// and continues with slope `m` past `rho`; when `m <= beta` it is the
/// single line `f1(0) + m x`. Any field may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexEnvelopeParams<T> {
    /// First price where the chord from `(0, f1(0))` touches `f2`.
    pub a: T,
    /// Slope of that chord.
    pub beta: T,
    /// Asymptotic slope of `f1`.
    pub m: T,
    /// First price where the slope of `f2` exceeds `m`.
    pub rho: T,
}

impl<T: Scalar> ConvexEnvelopeParams<T> {
    /// Whether the envelope follows `f2` somewhere (`beta < m`).
    pub fn touches_f2(&self) -> bool {
        self.beta < self.m
    }
}

fn fuzz<T: Scalar>(scale: T) -> T {
    T::epsilon() * T::lit(64.0) * (T::one() + scale.abs())
}

/// Closed-form parameters for a pair of convex payoffs.
pub fn convex_params<T: Scalar>(pair: &GamePayoffPair<T>) -> Result<ConvexEnvelopeParams<T>> {
    if !pair.is_convex() {
        return Err(Error::Precondition("closed-form envelope needs convex f1 and f2".into()));
    }
    let (f1, f2) = (&pair.f1, &pair.f2);
    let base = f1.at_zero();
    let top = f2.at_zero();
    let m = f1.asymptotic_slope();

    let a = if top <= base + fuzz(base) {
        T::zero()
    } else {
        threshold(f2, base)
    };
    let beta = if a.is_infinite() {
        T::infinity()
    } else if a == T::zero() {
        f2.right_slope(T::zero())
    } else {
        (f2.value(a) - base) / a
    };
    let rho = slope_crossing(f2, m);
    Ok(ConvexEnvelopeParams { a, beta, m, rho })
}

/// `inf{y > 0 : f2(y) - y f2'(y) <= base}`, i.e. the first point whose
/// tangent line passes below `(0, base)`.
fn threshold<T: Scalar>(f2: &PayoffFn<T>, base: T) -> T {
    match f2 {
        PayoffFn::Power { p, c, delta } => {
            // intercept delta - c (p - 1) y^p decreases in y
            ((*delta - base) / (*c * (*p - T::one()))).powf(T::one() / *p)
        }
        _ => f2
            .linear_pieces()
            .expect("piecewise-linear payoff")
            .iter()
            .find(|pc| {
                let intercept = pc.value - pc.slope * pc.start;
                intercept <= base + fuzz(base.abs() + pc.value.abs())
            })
            .map_or(T::infinity(), |pc| pc.start),
    }
}

/// `inf{t : f2'(t) > m}`.
fn slope_crossing<T: Scalar>(f2: &PayoffFn<T>, m: T) -> T {
    match f2 {
        PayoffFn::Power { p, c, .. } => {
            if m.is_infinite() {
                T::infinity()
            } else if m < T::zero() {
                T::zero()
            } else {
                (m / (*c * *p)).powf(T::one() / (*p - T::one()))
            }
        }
        _ => f2
            .linear_pieces()
            .expect("piecewise-linear payoff")
            .iter()
            .find(|pc| pc.slope > m + fuzz(m))
            .map_or(T::infinity(), |pc| pc.start),
    }
}

/// Envelope value from the closed form.
pub fn g_closed_form<T: Scalar>(params: &ConvexEnvelopeParams<T>, pair: &GamePayoffPair<T>, x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::Domain(format!("envelope evaluated at non-positive price {x}")));
    }
    Ok(closed_value(params, pair, x))
}

fn closed_value<T: Scalar>(pr: &ConvexEnvelopeParams<T>, pair: &GamePayoffPair<T>, x: T) -> T {
    let base = pair.f1.at_zero();
    if pr.touches_f2() {
        if x < pr.a {
            base + pr.beta * x
        } else if x < pr.rho {
            pair.f2.value(x)
        } else {
            pair.f2.value(pr.rho) + pr.m * (x - pr.rho)
        }
    } else {
        base + pr.m * x
    }
}

/// Closed set `{x >= 0 : g(x) = f2(x)}`, an interval for convex pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactSet<T> {
    pub lo: T,
    pub hi: T,
}

/// Envelope of a convex pair, evaluated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexEnvelope<T> {
    pub params: ConvexEnvelopeParams<T>,
    pub pair: GamePayoffPair<T>,
    pub contact: Option<ContactSet<T>>,
}

impl<T: Scalar> ConvexEnvelope<T> {
    pub fn new(pair: &GamePayoffPair<T>) -> Result<Self> {
        let params = convex_params(pair)?;
        let contact = contact_set(&params, pair);
        Ok(ConvexEnvelope { params, pair: pair.clone(), contact })
    }
}

fn contact_set<T: Scalar>(pr: &ConvexEnvelopeParams<T>, pair: &GamePayoffPair<T>) -> Option<ContactSet<T>> {
    if pr.touches_f2() {
        return Some(ContactSet { lo: pr.a, hi: pr.rho });
    }
    // zero set of the convex, non-negative gap f2 - (f1(0) + m x)
    let base = pair.f1.at_zero();
    let gap = |x: T| pair.f2.value(x) - base - pr.m * x;
    let is_zero = |x: T| gap(x).abs() <= fuzz(pair.f2.value(x));
    match &pair.f2 {
        PayoffFn::Power { .. } => {
            let x = pr.rho;
            (x.is_finite() && is_zero(x)).then_some(ContactSet { lo: x, hi: x })
        }
        f2 => {
            let pieces = f2.linear_pieces().expect("piecewise-linear payoff");
            let zeros: Vec<usize> = (0..pieces.len()).filter(|&j| is_zero(pieces[j].start)).collect();
            let (&first, &last) = (zeros.first()?, zeros.last()?);
            let flat_tail = last + 1 == pieces.len() && (pieces[last].slope - pr.m).abs() <= fuzz(pr.m);
            let hi = if flat_tail { T::infinity() } else { pieces[last].start };
            Some(ContactSet { lo: pieces[first].start, hi })
        }
    }
}

impl<T: Scalar> EnvelopeView<T> for ConvexEnvelope<T> {
    fn value(&self, x: T) -> Result<T> {
        g_closed_form(&self.params, &self.pair, x)
    }

    fn right_derivative(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::Domain(format!("derivative at non-positive price {x}")));
        }
        let pr = &self.params;
        Ok(if !pr.touches_f2() || x >= pr.rho {
            pr.m
        } else if x < pr.a {
            pr.beta
        } else {
            self.pair.f2.right_slope(x)
        })
    }

    fn stop_interval(&self, x: T) -> Result<ExitInterval<T>> {
        if !(x > T::zero()) {
            return Err(Error::Domain(format!("stop interval at non-positive price {x}")));
        }
        Ok(match self.contact {
            None => ExitInterval::unbounded(),
            Some(ContactSet { lo, .. }) if x < lo => ExitInterval::new(T::neg_infinity(), lo),
            Some(ContactSet { hi, .. }) if x > hi => ExitInterval::new(hi, T::infinity()),
            Some(_) => ExitInterval::empty_at(x),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(f1: PayoffFn<f64>, f2: PayoffFn<f64>) -> GamePayoffPair<f64> {
        GamePayoffPair::new(f1, f2, 4.0).unwrap()
    }
    fn call(k: f64, c: f64, d: f64) -> PayoffFn<f64> {
        PayoffFn::call(k, c, d).unwrap()
    }
    fn put(k: f64, c: f64, d: f64) -> PayoffFn<f64> {
        PayoffFn::put(k, c, d).unwrap()
    }
    fn power(p: f64, c: f64, d: f64) -> PayoffFn<f64> {
        PayoffFn::power(p, c, d).unwrap()
    }

    #[test]
    fn params_of_worked_examples() {
        let p = convex_params(&pair(call(100.0, 1.0, 0.0), call(100.0, 1.0, 10.0))).unwrap();
        assert_eq!((p.a, p.beta, p.m, p.rho), (100.0, 0.1, 1.0, f64::INFINITY));

        let p = convex_params(&pair(put(100.0, 1.0, 0.0), put(100.0, 1.0, 10.0))).unwrap();
        assert_eq!((p.a, p.beta, p.m, p.rho), (100.0, -0.9, 0.0, f64::INFINITY));

        let p = convex_params(&pair(power(2.0, 1.0, 0.0), power(2.0, 1.0, 4.0))).unwrap();
        assert_eq!((p.a, p.beta, p.m, p.rho), (2.0, 4.0, f64::INFINITY, f64::INFINITY));
    }

    #[test]
    fn values_of_worked_examples() {
        let call_pair = pair(call(100.0, 1.0, 0.0), call(100.0, 1.0, 10.0));
        let env = ConvexEnvelope::new(&call_pair).unwrap();
        assert_eq!(env.value(80.0).unwrap(), 8.0);
        assert_eq!(env.value(120.0).unwrap(), 30.0);
        assert_eq!(env.right_derivative(80.0).unwrap(), 0.1);
        assert_eq!(env.stop_interval(80.0).unwrap(), ExitInterval::new(f64::NEG_INFINITY, 100.0));

        let deep = ConvexEnvelope::new(&pair(put(100.0, 1.0, 0.0), put(100.0, 1.0, 120.0))).unwrap();
        assert_eq!(deep.value(50.0).unwrap(), 100.0);
        assert_eq!(deep.right_derivative(50.0).unwrap(), 0.0);
        assert_eq!(deep.stop_interval(50.0).unwrap(), ExitInterval::unbounded());

        let put_pair = ConvexEnvelope::new(&pair(put(100.0, 1.0, 0.0), put(100.0, 1.0, 10.0))).unwrap();
        assert!((put_pair.value(80.0).unwrap() - 28.0).abs() < 1e-12);
        assert_eq!(put_pair.right_derivative(80.0).unwrap(), -0.9);
    }

    #[test]
    fn call_with_steeper_cancellation_payoff() {
        // slope of f2 jumps past m = 1 at the strike
        let env = ConvexEnvelope::new(&pair(call(100.0, 1.0, 0.0), call(100.0, 2.0, 0.0))).unwrap();
        assert_eq!(env.params.rho, 100.0);
        assert_eq!(env.params.a, 0.0);
        assert_eq!(env.value(120.0).unwrap(), 20.0);
        assert_eq!(env.right_derivative(120.0).unwrap(), 1.0);
        assert_eq!(env.stop_interval(120.0).unwrap(), ExitInterval::new(100.0, f64::INFINITY));
        assert!(env.is_contact(50.0).unwrap());
    }

    #[test]
    fn large_penalty_call_is_the_stock() {
        for delta in [100.0, 150.0] {
            let env = ConvexEnvelope::new(&pair(call(100.0, 1.0, 0.0), call(100.0, 1.0, delta))).unwrap();
            assert!(!env.params.touches_f2());
            assert_eq!(env.value(80.0).unwrap(), 80.0);
            assert_eq!(env.right_derivative(80.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn power_without_penalty_is_stopped_everywhere() {
        let env = ConvexEnvelope::new(&pair(power(2.0, 1.0, 0.0), power(2.0, 2.0, 0.0))).unwrap();
        assert_eq!(env.value(3.0).unwrap(), 18.0);
        assert!(env.is_contact(3.0).unwrap());
    }

    #[test]
    fn rejects_non_convex_and_non_positive() {
        let hump = PayoffFn::tabulated(vec![50.0, 100.0, 150.0], vec![0.0, 20.0, 0.0]);
        assert!(hump.is_err()); // decreasing right tail is invalid anyway
        let bumpy = PayoffFn::tabulated(vec![50.0, 100.0, 150.0], vec![25.0, 45.0, 50.0]).unwrap();
        assert!(matches!(convex_params(&pair(bumpy.clone(), bumpy)), Err(Error::Precondition(_))));
        let env = ConvexEnvelope::new(&pair(call(100.0, 1.0, 0.0), call(100.0, 1.0, 10.0))).unwrap();
        assert!(matches!(env.value(0.0), Err(Error::Domain(_))));
    }
}

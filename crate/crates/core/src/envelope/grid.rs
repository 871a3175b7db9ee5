use serde::Serialize;

use super::closed::{convex_params, ConvexEnvelopeParams};
use super::{EnvelopeView, ExitInterval};
use crate::error::{Error, Result};
use crate::payoff::GamePayoffPair;
use crate::scalar::Scalar;

/// How the double-obstacle fixed point is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridSolver {
    /// Active-set Newton on `h = clamp(avg(h), f1, f2)`, one tridiagonal
    /// solve per step; falls back to red-black sweeps if the active set cycles.
    #[default]
    ActiveSet,
    /// Red-black Gauss-Seidel sweeps from `h = f1`, monotonicity asserted.
    RedBlack,
}

#[derive(Debug, Clone)]
pub struct GridOptions<T> {
    pub x_min: T,
    pub x_max: T,
    pub n_points: usize,
    pub tol: T,
    pub solver: GridSolver,
    /// Price placed exactly on a node (typically the spot).
    pub anchor: Option<T>,
    /// Sweep cap for the red-black solver; `10 n^2` when `None`.
    pub max_sweeps: Option<usize>,
}

impl<T: Scalar> GridOptions<T> {
    pub fn new(x_min: T, x_max: T, n_points: usize) -> Self {
        GridOptions {
            x_min,
            x_max,
            n_points,
            tol: T::lit(1e-9),
            solver: GridSolver::default(),
            anchor: None,
            max_sweeps: None,
        }
    }

    /// `[lo / 1000, 10 hi]` with `lo`, `hi` the extremes of the spot and the
    /// kinks, 4096 points.
    pub fn around(pair: &GamePayoffPair<T>, s0: T) -> Self {
        let kinks = pair.kinks();
        let lo = kinks.iter().fold(s0, |a, &k| a.min(k));
        let hi = kinks.iter().fold(s0, |a, &k| a.max(k));
        let mut opts = GridOptions::new(lo * T::lit(1e-3), hi * T::lit(10.0), 4096);
        opts.anchor = Some(s0);
        opts
    }
}

/// Envelope sampled on a price grid.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeResult<T> {
    pub xs: Vec<T>,
    pub g: Vec<T>,
    pub dplus: Vec<T>,
    pub f1: Vec<T>,
    pub f2: Vec<T>,
    pub stop_mask: Vec<bool>,
    pub convex_params: Option<ConvexEnvelopeParams<T>>,
    pub tol: T,
    /// Newton steps or red-black sweeps used.
    pub iterations: usize,
}

/// Builds the node set: uniform points with kinks and the anchor moved onto
/// their nearest interior node (or inserted when two land on the same node).
fn build_nodes<T: Scalar>(opts: &GridOptions<T>, pair: &GamePayoffPair<T>) -> Vec<T> {
    let n = opts.n_points;
    let dx = (opts.x_max - opts.x_min) / T::lit((n - 1) as f64);
    let mut xs: Vec<T> = (0..n).map(|i| opts.x_min + dx * T::lit(i as f64)).collect();
    xs[n - 1] = opts.x_max;
    let mut special = pair.kinks();
    special.extend(opts.anchor);
    let mut taken = vec![false; n];
    let mut extra = Vec::new();
    for k in special {
        if !(k > opts.x_min && k < opts.x_max) {
            continue;
        }
        let j = ((k - opts.x_min) / dx).round().to_usize().unwrap_or(0).clamp(1, n - 2);
        if xs[j] == k {
            taken[j] = true;
        } else if !taken[j] {
            xs[j] = k;
            taken[j] = true;
        } else {
            extra.push(k);
        }
    }
    xs.extend(extra);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    xs
}

/// Neighbour-average operator on a non-uniform grid: linear interpolation
/// between the two neighbours, with a ghost node `(0, f1(0))` on the left
/// and a slope condition on the right.
struct Stencil<T> {
    wl: Vec<T>,
    wr: Vec<T>,
    ghost: T,
    tail: T,
}

impl<T: Scalar> Stencil<T> {
    fn new(xs: &[T], ghost: T, slope: T) -> Self {
        let n = xs.len();
        let mut wl = vec![T::zero(); n];
        let mut wr = vec![T::zero(); n];
        for i in 0..n - 1 {
            let left = if i == 0 { T::zero() } else { xs[i - 1] };
            let span = xs[i + 1] - left;
            wl[i] = (xs[i + 1] - xs[i]) / span;
            wr[i] = (xs[i] - left) / span;
        }
        let tail = slope * (xs[n - 1] - xs[n - 2]);
        Stencil { wl, wr, ghost, tail }
    }

    fn avg(&self, h: &[T], i: usize) -> T {
        let n = h.len();
        if i == n - 1 {
            h[n - 2] + self.tail
        } else {
            let left = if i == 0 { self.ghost } else { h[i - 1] };
            self.wl[i] * left + self.wr[i] * h[i + 1]
        }
    }
}

fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

/// Residual `sup |clamp(avg(h)) - h|`.
fn residual<T: Scalar>(st: &Stencil<T>, h: &[T], f1: &[T], f2: &[T]) -> T {
    (0..h.len()).fold(T::zero(), |r, i| r.max((clamp(st.avg(h, i), f1[i], f2[i]) - h[i]).abs()))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Node {
    Lower,
    Upper,
    Free,
}

/// Thomas algorithm for `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
fn solve_tridiagonal<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn active_set<T: Scalar>(st: &Stencil<T>, f1: &[T], f2: &[T], tol: T) -> Option<(Vec<T>, usize)> {
    let n = f1.len();
    // A node keeps its obstacle while within `tol` of it; exact ties
    // otherwise flip it back and forth where f1 and f2 run parallel.
    let classify = |h: &[T], prev: Option<&[Node]>| -> Vec<Node> {
        (0..n)
            .map(|i| {
                let a = st.avg(h, i);
                let keep = prev.map(|p| p[i]);
                if a <= f1[i] || (keep == Some(Node::Lower) && a <= f1[i] + tol) {
                    Node::Lower
                } else if a >= f2[i] || (keep == Some(Node::Upper) && a >= f2[i] - tol) {
                    Node::Upper
                } else {
                    Node::Free
                }
            })
            .collect()
    };
    let mut h = f1.to_vec();
    let mut state = classify(&h, None);
    let (mut sub, mut diag, mut sup, mut rhs) =
        (vec![T::zero(); n], vec![T::one(); n], vec![T::zero(); n], vec![T::zero(); n]);
    for step in 1..=n + 16 {
        for i in 0..n {
            sub[i] = T::zero();
            sup[i] = T::zero();
            diag[i] = T::one();
            match state[i] {
                Node::Lower => rhs[i] = f1[i],
                Node::Upper => rhs[i] = f2[i],
                Node::Free if i == n - 1 => {
                    sub[i] = -T::one();
                    rhs[i] = st.tail;
                }
                Node::Free => {
                    sup[i] = -st.wr[i];
                    if i == 0 {
                        rhs[i] = st.wl[0] * st.ghost;
                    } else {
                        sub[i] = -st.wl[i];
                        rhs[i] = T::zero();
                    }
                }
            }
        }
        h = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        let next = classify(&h, Some(&state));
        if next == state {
            return (residual(st, &h, f1, f2) <= tol).then_some((h, step));
        }
        state = next;
    }
    None
}

fn red_black<T: Scalar>(
    st: &Stencil<T>,
    f1: &[T],
    f2: &[T],
    tol: T,
    cap: usize,
) -> Result<(Vec<T>, usize)> {
    let n = f1.len();
    let scale = f2.iter().chain(f1).fold(T::one(), |a, v| a.max(v.abs()));
    let slack = T::lit(1e-12) * scale;
    let mut h = f1.to_vec();
    let mut change = T::infinity();
    for sweep in 1..=cap {
        change = T::zero();
        for parity in 0..2 {
            for i in (parity..n).step_by(2) {
                let new = clamp(st.avg(&h, i), f1[i], f2[i]);
                let diff = new - h[i];
                if diff < -slack {
                    return Err(Error::NonMonotone { index: i, decrease: (-diff).as_f64() });
                }
                change = change.max(diff.abs());
                h[i] = new;
            }
        }
        if change < tol {
            return Ok((h, sweep));
        }
    }
    Err(Error::NoConvergence { iterations: cap, last_change: change.as_f64() })
}

/// Least solution of `h = max(f1, min(f2, avg(h)))` on a grid over
/// `[x_min, x_max]`.
///
/// The left neighbour of the first node is the origin with value `f1(0)`;
/// the last node continues the previous one with the slope of `f1` there.
pub fn g_grid<T: Scalar>(pair: &GamePayoffPair<T>, opts: &GridOptions<T>) -> Result<EnvelopeResult<T>> {
    if !(opts.x_min > T::zero() && opts.x_max > opts.x_min && opts.x_max.is_finite()) {
        return Err(Error::Precondition(format!(
            "grid domain must satisfy 0 < x_min < x_max, got [{}, {}]",
            opts.x_min, opts.x_max
        )));
    }
    if opts.n_points < 16 {
        return Err(Error::Precondition(format!("need at least 16 grid points, got {}", opts.n_points)));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let xs = build_nodes(opts, pair);
    let n = xs.len();
    let f1: Vec<T> = xs.iter().map(|&x| pair.f1.value(x)).collect();
    let f2: Vec<T> = xs.iter().map(|&x| pair.f2.value(x)).collect();
    if f1.iter().chain(&f2).any(|v| !v.is_finite()) {
        return Err(Error::Domain("payoff not finite on the grid".into()));
    }
    let slope = (f1[n - 1] - f1[n - 2]) / (xs[n - 1] - xs[n - 2]);
    let st = Stencil::new(&xs, pair.f1.at_zero(), slope);
    let cap = opts.max_sweeps.unwrap_or(10 * opts.n_points * opts.n_points);

    let (g, iterations) = match opts.solver {
        GridSolver::RedBlack => red_black(&st, &f1, &f2, opts.tol, cap)?,
        GridSolver::ActiveSet => match active_set(&st, &f1, &f2, opts.tol) {
            Some(found) => found,
            None => red_black(&st, &f1, &f2, opts.tol, cap)?,
        },
    };

    let mut dplus: Vec<T> = xs.windows(2).zip(g.windows(2)).map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0])).collect();
    dplus.push(slope);
    let band = T::lit(10.0) * opts.tol;
    let stop_mask = g.iter().zip(&f2).map(|(a, b)| (*a - *b).abs() <= band).collect();
    let convex = if pair.is_convex() { convex_params(pair).ok() } else { None };
    Ok(EnvelopeResult { xs, g, dplus, f1, f2, stop_mask, convex_params: convex, tol: opts.tol, iterations })
}

impl<T: Scalar> EnvelopeResult<T> {
    /// Index `i` with `xs[i] <= x < xs[i+1]`, or the last node at `x_max`.
    fn bracket(&self, x: T) -> Result<usize> {
        let n = self.xs.len();
        if !(x >= self.xs[0] && x <= self.xs[n - 1]) {
            return Err(Error::Domain(format!(
                "price {x} outside grid [{}, {}]",
                self.xs[0],
                self.xs[n - 1]
            )));
        }
        Ok(self.xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 1))
    }

    pub fn domain(&self) -> (T, T) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn interp(&self, v: &[T], i: usize, x: T) -> T {
        if i + 1 == self.xs.len() || x == self.xs[i] {
            return v[i];
        }
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        v[i] + w * (v[i + 1] - v[i])
    }

    /// Largest gap `g - f2` and smallest gap `g - f1` over the grid.
    pub fn sandwich_margins(&self) -> (T, T) {
        let over = self.g.iter().zip(&self.f2).fold(T::neg_infinity(), |a, (g, f)| a.max(*g - *f));
        let under = self.g.iter().zip(&self.f1).fold(T::infinity(), |a, (g, f)| a.min(*g - *f));
        (over, under)
    }
}

impl<T: Scalar> EnvelopeView<T> for EnvelopeResult<T> {
    fn value(&self, x: T) -> Result<T> {
        let i = self.bracket(x)?;
        Ok(self.interp(&self.g, i, x))
    }

    fn right_derivative(&self, x: T) -> Result<T> {
        Ok(self.dplus[self.bracket(x)?])
    }

    fn stop_interval(&self, x: T) -> Result<ExitInterval<T>> {
        let i = self.bracket(x)?;
        let n = self.xs.len();
        let on_node = x == self.xs[i];
        let inside = if on_node || i + 1 == n {
            self.stop_mask[i]
        } else {
            self.stop_mask[i] && self.stop_mask[i + 1]
        };
        if inside {
            return Ok(ExitInterval::empty_at(x));
        }
        let lo = (0..=i)
            .rev()
            .find(|&j| self.stop_mask[j])
            .map_or(T::neg_infinity(), |j| self.xs[j]);
        let hi = ((i + 1).min(n)..n)
            .find(|&j| self.stop_mask[j])
            .map_or(T::infinity(), |j| self.xs[j]);
        Ok(ExitInterval::new(lo, hi))
    }
}

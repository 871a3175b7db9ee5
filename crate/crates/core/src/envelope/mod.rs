//! The game concave envelope `g`: the smallest continuous `h` with
//! `f1 <= h <= f2` that is concave wherever `h < f2`.
//!
//! [`ConvexEnvelope`] evaluates the closed form available for convex payoff
//! pairs; [`g_grid`] solves the discrete double-obstacle problem for any
//! continuous pair. Both implement [`EnvelopeView`], which is all the hedge
//! needs.

mod closed;
mod grid;

pub use closed::{convex_params, g_closed_form, ContactSet, ConvexEnvelope, ConvexEnvelopeParams};
pub use grid::{g_grid, EnvelopeResult, GridOptions, GridSolver};

use serde::Serialize;

use crate::error::Result;
use crate::scalar::Scalar;

/// Open interval `(lo, hi)` around the spot on which `g < f2`; either end
/// may be infinite. Empty when `lo >= hi`, meaning cancel immediately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitInterval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ExitInterval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        ExitInterval { lo, hi }
    }

    /// The degenerate interval `(x, x)`.
    pub fn empty_at(x: T) -> Self {
        ExitInterval { lo: x, hi: x }
    }

    pub fn unbounded() -> Self {
        ExitInterval { lo: T::neg_infinity(), hi: T::infinity() }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    pub fn contains(&self, s: T) -> bool {
        self.lo < s && s < self.hi
    }

    /// Distance by which `s` lies outside the closed interval, zero inside.
    pub fn overshoot(&self, s: T) -> T {
        if self.is_empty() {
            return T::zero();
        }
        (self.lo - s).max(s - self.hi).max(T::zero())
    }
}

/// Read access to an envelope, independent of how it was computed.
pub trait EnvelopeView<T: Scalar> {
    fn value(&self, x: T) -> Result<T>;

    fn right_derivative(&self, x: T) -> Result<T>;

    /// `K_x`: the maximal open interval around `x` on which `g < f2`.
    fn stop_interval(&self, x: T) -> Result<ExitInterval<T>>;

    /// Whether `g(x) = f2(x)` up to the envelope's tolerance.
    fn is_contact(&self, x: T) -> Result<bool> {
        Ok(self.stop_interval(x)?.is_empty())
    }
}

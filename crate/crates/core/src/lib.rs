//! Super-replication of game (Israeli) options when the volatility model is
//! fully incomplete.
//!
//! The price of the option is the game concave envelope `g` of the payoff
//! pair, hedged by buying and holding `dg(S0)` shares until the spot leaves
//! the interval on which `g < f2`. The remaining modules cross-check that
//! claim: Monte Carlo audits of the hedge, an uncertain-volatility stopping
//! lattice, a finite semi-static superhedging LP and a quantile coupling of
//! Brownian increments to discrete martingales.
//!
//! Pure arithmetic (payoffs, envelopes, hedges) is generic over [`Scalar`];
//! the aliases at the crate root fix it to `f64`.

pub mod envelope;
pub mod error;
pub mod hedge;
pub mod lawdensity;
pub mod models;
pub mod payoff;
pub mod rng;
pub mod scalar;
pub mod semistatic;
pub mod stopvalue;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Payoff = payoff::PayoffFn<f64>;
pub type GamePair = payoff::GamePayoffPair<f64>;
pub type Envelope = envelope::ConvexEnvelope<f64>;
pub type GridEnvelope = envelope::EnvelopeResult<f64>;
pub type Hedge = hedge::TrivialHedge<f64>;

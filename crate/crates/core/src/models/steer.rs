use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dynamics, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Target volatility `nu0 exp(clip(drift_w W_t + drift_t t, -clip, clip))`,
/// a bounded functional of the spot driver with `target(0) = nu0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteerTarget {
    #[serde(default)]
    pub drift_w: f64,
    #[serde(default)]
    pub drift_t: f64,
    #[serde(default = "SteerTarget::default_clip")]
    pub clip: f64,
}

impl SteerTarget {
    fn default_clip() -> f64 {
        1.0
    }

    /// The constant target `nu0`.
    pub fn constant() -> Self {
        SteerTarget { drift_w: 0.0, drift_t: 0.0, clip: 0.0 }
    }

    fn value(&self, nu0: f64, w: f64, t: f64) -> f64 {
        let x = self.drift_w * w + self.drift_t * t;
        nu0 * if self.clip > 0.0 { x.clamp(-self.clip, self.clip) } else { 0.0 }.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteerReport {
    pub n_blocks: usize,
    pub n_paths: usize,
    /// Fraction of paths on which `sup_t |target - nu| >= eps`.
    pub prob_exceed: f64,
    pub mc_stderr: f64,
    /// `2 C / T` for the constant `C` bounding the coefficients near the target.
    pub block_threshold: f64,
    pub below_threshold: bool,
}

/// Coefficients of `dnu = a dt + b dW_hat + c dW` for Heston, `nu = sqrt(U)`.
#[derive(Clone, Copy)]
struct VolSde {
    kappa: f64,
    theta: f64,
    b: f64,
    c: f64,
    xi: f64,
}

impl VolSde {
    fn drift(&self, x: f64) -> f64 {
        0.5 * self.kappa * (self.theta / x - x) - self.xi * self.xi / (8.0 * x)
    }
}

/// Sup over the band the construction keeps `nu` in of `|a| + |b| + |c| + 1/|b|`.
fn coefficient_bound(sde: &VolSde, lo: f64, hi: f64) -> f64 {
    let n = 256;
    let worst_drift = (0..=n)
        .map(|i| sde.drift(lo + (hi - lo) * i as f64 / n as f64).abs())
        .fold(0.0, f64::max);
    worst_drift + sde.b.abs() + sde.c.abs() + 1.0 / sde.b.abs()
}

/// Runs the block-drift construction under the new measure: independent
/// drivers `W`, `W~`, the volatility driven by `W_hat = W~ + int gamma`,
/// with `gamma` on block `k + 1` equal to the clamped
/// `n / (b T) (J_k - I_k - L_k)`. Each path stops at the first time the
/// volatility is `eps` away from the target.
pub fn steer_volatility(
    spec: &ModelSpec,
    target: SteerTarget,
    n_blocks: usize,
    eps: f64,
    n_paths: usize,
    fine_steps: usize,
    seed: u64,
) -> Result<SteerReport> {
    spec.validate()?;
    let Dynamics::Heston { kappa, theta, xi, v0 } = spec.dynamics else {
        return Err(Error::InvalidParameter("steering is implemented for Heston dynamics".into()));
    };
    if target.clip.is_infinite() && (target.drift_w != 0.0 || target.drift_t != 0.0) {
        return Err(Error::InvalidParameter("target must be bounded: give a finite clip".into()));
    }
    if n_blocks == 0 || n_paths == 0 || !(eps > 0.0) {
        return Err(Error::Precondition("need blocks, paths and eps > 0".into()));
    }
    let rho = spec.rho;
    let sde = VolSde { kappa, theta, xi, b: 0.5 * xi * (1.0 - rho * rho).sqrt(), c: 0.5 * xi * rho };
    let nu0 = v0.sqrt();
    let horizon = spec.horizon;
    let sub = fine_steps.div_ceil(n_blocks).max(1);
    let h = horizon / (n_blocks * sub) as f64;
    let sq = h.sqrt();
    let cap = (n_blocks * n_blocks) as f64;

    let span = target.clip.max(0.0).exp();
    let bound = (span / nu0).max(nu0 * span);
    let block_threshold = if sde.b > 0.0 {
        2.0 * coefficient_bound(&sde, 0.5 / bound, bound + 0.5 / bound) / horizon
    } else {
        f64::INFINITY
    };

    let exceeded: Vec<bool> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, p as u64);
            let (mut nu, mut w, mut t) = (nu0, 0.0, 0.0);
            let mut alpha_prev = target.value(nu0, 0.0, 0.0);
            // J - I - L of the previous block; zero drift on the first block
            let mut pending = 0.0;
            for _ in 0..n_blocks {
                let (mut i_k, mut l_k) = (0.0, 0.0);
                for _ in 0..sub {
                    let zw: f64 = StandardNormal.sample(&mut rng);
                    let zt: f64 = StandardNormal.sample(&mut rng);
                    let (dw, dwt) = (sq * zw, sq * zt);
                    let a = sde.drift(nu);
                    let gamma = if sde.b > 0.0 {
                        (pending * n_blocks as f64 / (sde.b * horizon)).clamp(-cap, cap)
                    } else {
                        0.0
                    };
                    i_k += a * h + sde.c * dw;
                    l_k += sde.b * dwt;
                    nu += (a + sde.b * gamma) * h + sde.b * dwt + sde.c * dw;
                    w += dw;
                    t += h;
                    if !(nu > 0.0) || (target.value(nu0, w, t) - nu).abs() >= eps {
                        return true;
                    }
                }
                let alpha = target.value(nu0, w, t);
                pending = (alpha - alpha_prev) - i_k - l_k;
                alpha_prev = alpha;
            }
            false
        })
        .collect();
    let hits = exceeded.iter().filter(|&&e| e).count();
    let p = hits as f64 / n_paths as f64;
    Ok(SteerReport {
        n_blocks,
        n_paths,
        prob_exceed: p,
        mc_stderr: (p * (1.0 - p) / n_paths as f64).sqrt(),
        block_threshold,
        below_threshold: (n_blocks as f64) <= block_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_model_never_exceeds() {
        let spec = ModelSpec::heston_default(100.0, 0.0)
            .with_dynamics(Dynamics::Heston { kappa: 2.0, theta: 0.09, xi: 1e-6, v0: 0.09 });
        let rep = steer_volatility(&spec, SteerTarget::constant(), 16, 0.05, 500, 256, 1).unwrap();
        assert_eq!(rep.prob_exceed, 0.0);
    }

    #[test]
    fn more_blocks_track_better() {
        let spec = ModelSpec::heston_default(100.0, 0.0);
        let probs: Vec<f64> = [4, 16, 64]
            .iter()
            .map(|&n| steer_volatility(&spec, SteerTarget::constant(), n, 0.05, 2000, 512, 3).unwrap().prob_exceed)
            .collect();
        assert!(probs[0] >= probs[1] && probs[1] >= probs[2], "{probs:?}");
    }

    #[test]
    fn rejects_unbounded_target_and_other_models() {
        let spec = ModelSpec::heston_default(100.0, 0.0);
        let wild = SteerTarget { drift_w: 1.0, drift_t: 0.0, clip: f64::INFINITY };
        assert!(steer_volatility(&spec, wild, 8, 0.05, 10, 64, 1).is_err());
        let scott = spec.with_dynamics(Dynamics::Scott { lambda: 0.3, kappa: 1.0, theta: 0.3, u0: 0.0 });
        assert!(steer_volatility(&scott, SteerTarget::constant(), 8, 0.05, 10, 64, 1).is_err());
    }
}

//! Discrete martingale laws driven by Brownian motion.
//!
//! A finite-support martingale chain is built from Gaussian increments by
//! inverting its conditional distribution functions at `Phi(Z_k)`, and then
//! interpolated in continuous time by conditional expectation given the
//! Brownian path so far. The diagnostics check that the chain has the target
//! law and that the interpolated paths approach a geometric Brownian motion
//! as the law is refined.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::substream;

fn normal<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Law of `M_{k+1}` given `M_k = given`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditional {
    pub given: f64,
    pub support: Vec<f64>,
    pub prob: Vec<f64>,
}

impl Conditional {
    /// Smallest support point whose cumulative probability reaches `u`.
    fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (&y, &p) in self.support.iter().zip(&self.prob) {
            acc += p;
            if acc >= u {
                return y;
            }
        }
        *self.support.last().unwrap()
    }

    /// Gaussian thresholds: the chain jumps past `support[j]` once the
    /// step increment exceeds `cuts[j]`.
    fn cuts(&self, step_sd: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.prob[..self.prob.len() - 1]
            .iter()
            .map(|&p| {
                acc += p;
                step_sd * inverse_norm_cdf(acc.min(1.0))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawStep {
    pub conditionals: Vec<Conditional>,
}

/// Martingale `M_0 = s0, ..., M_n` whose step `k` law depends on the current
/// value only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMartingaleLaw {
    pub n: usize,
    pub s0: f64,
    #[serde(rename = "T", default = "DiscreteMartingaleLaw::unit")]
    pub horizon: f64,
    pub steps: Vec<LawStep>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

impl DiscreteMartingaleLaw {
    fn unit() -> f64 {
        1.0
    }

    /// Cox-Ross-Rubinstein tree for `s0 exp(sigma B - sigma^2 t / 2)`.
    pub fn binomial_gbm(s0: f64, sigma: f64, horizon: f64, n: usize) -> Self {
        let a = sigma * (horizon / n as f64).sqrt();
        let (up, down) = (a.exp(), (-a).exp());
        let p = (1.0 - down) / (up - down);
        let node = |k: usize, j: usize| s0 * (a * (2.0 * j as f64 - k as f64)).exp();
        let steps = (0..n)
            .map(|k| LawStep {
                conditionals: (0..=k)
                    .map(|j| Conditional {
                        given: node(k, j),
                        support: vec![node(k + 1, j), node(k + 1, j + 1)],
                        prob: vec![1.0 - p, p],
                    })
                    .collect(),
            })
            .collect();
        DiscreteMartingaleLaw { n, s0, horizon, steps }
    }

    /// `M_k = s0` for every `k`.
    pub fn constant(s0: f64, horizon: f64, n: usize) -> Self {
        let step = LawStep { conditionals: vec![Conditional { given: s0, support: vec![s0], prob: vec![1.0] }] };
        DiscreteMartingaleLaw { n, s0, horizon, steps: vec![step; n] }
    }

    pub fn step_sd(&self) -> f64 {
        (self.horizon / self.n as f64).sqrt()
    }

    fn conditional(&self, k: usize, given: f64) -> Result<&Conditional> {
        self.steps[k]
            .conditionals
            .iter()
            .find(|c| close(c.given, given))
            .ok_or_else(|| Error::OffSupport(format!("no law for step {} from {given}", k + 1)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 || self.steps.len() != self.n {
            return bad(format!("expected {} steps, found {}", self.n, self.steps.len()));
        }
        if !(self.s0 > 0.0 && self.horizon > 0.0) {
            return bad("s0 and T must be positive".into());
        }
        for (k, step) in self.steps.iter().enumerate() {
            for c in &step.conditionals {
                if c.support.is_empty() || c.support.len() != c.prob.len() {
                    return bad(format!("step {}: support and prob lengths differ", k + 1));
                }
                if c.support.iter().any(|&y| !(y > 0.0 && y.is_finite())) || c.support.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!("step {}: support must be positive and increasing", k + 1));
                }
                if c.prob.iter().any(|&p| !(p >= 0.0)) {
                    return bad(format!("step {}: negative probability", k + 1));
                }
                let total: f64 = c.prob.iter().sum();
                let mean: f64 = c.support.iter().zip(&c.prob).map(|(y, p)| y * p).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("step {}: probabilities sum to {total}", k + 1));
                }
                if (mean - c.given).abs() > 1e-12 * (1.0 + c.given.abs()) {
                    return bad(format!("step {}: mean {mean} differs from {}", k + 1, c.given));
                }
            }
        }
        let mut reach = vec![self.s0];
        for k in 0..self.n {
            let mut next = Vec::new();
            for &x in &reach {
                let c = self.conditional(k, x)?;
                for (&y, &p) in c.support.iter().zip(&c.prob) {
                    if p > 0.0 && !next.iter().any(|&z| close(z, y)) {
                        next.push(y);
                    }
                }
            }
            reach = next;
        }
        Ok(())
    }

    /// `C` with every value of the chain in `[1/C, C]`.
    pub fn bound(&self) -> f64 {
        let vals = self.steps.iter().flat_map(|s| s.conditionals.iter().flat_map(|c| c.support.iter())).chain([&self.s0]);
        vals.fold(1.0f64, |c, &v| c.max(v).max(1.0 / v))
    }

    /// Every path with positive probability and its probability.
    pub fn path_pmf(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        let mut out = vec![(vec![self.s0], 1.0)];
        for k in 0..self.n {
            let mut next = Vec::new();
            for (path, q) in out {
                let c = self.conditional(k, *path.last().unwrap())?;
                for (&y, &p) in c.support.iter().zip(&c.prob) {
                    if p > 0.0 {
                        let mut ext = path.clone();
                        ext.push(y);
                        next.push((ext, q * p));
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Gaussian increments `Z_1..Z_n` (variance `T / n`) and the chain they drive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSample {
    pub z: Vec<f64>,
    pub m: Vec<f64>,
}

/// `M_k = sup { y : F_k(y | M_{k-1}) < Phi(Z_k / sd) }`.
pub fn couple(law: &DiscreteMartingaleLaw, z: &[f64]) -> Result<Vec<f64>> {
    let sd = law.step_sd();
    let mut m = Vec::with_capacity(law.n + 1);
    m.push(law.s0);
    for (k, &zk) in z.iter().enumerate().take(law.n) {
        let c = law.conditional(k, m[k])?;
        m.push(c.quantile(norm_cdf(zk / sd)));
    }
    Ok(m)
}

pub fn quantile_coupling_sample(law: &DiscreteMartingaleLaw, n_samples: usize, seed: u64) -> Result<Vec<CouplingSample>> {
    law.validate()?;
    let sd = law.step_sd();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let z: Vec<f64> = (0..law.n).map(|_| sd * normal(&mut rng)).collect();
            let m = couple(law, &z)?;
            Ok(CouplingSample { z, m })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawMatch {
    pub tv_distance: f64,
    pub chi2_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Chi-square test at the 99% level.
    pub pass: bool,
}

/// Empirical joint law of the sampled chains against the exact path law.
pub fn law_match_test(samples: &[CouplingSample], law: &DiscreteMartingaleLaw) -> Result<LawMatch> {
    let pmf = law.path_pmf()?;
    let mut counts = vec![0usize; pmf.len()];
    for s in samples {
        let hit = pmf
            .iter()
            .position(|(path, _)| path.len() == s.m.len() && path.iter().zip(&s.m).all(|(a, b)| close(*a, *b)));
        match hit {
            Some(i) => counts[i] += 1,
            None => return Err(Error::OffSupport(format!("sampled path {:?} is not in the law", s.m))),
        }
    }
    let n = samples.len() as f64;
    let mut tv = 0.0;
    let mut chi2 = 0.0;
    for ((_, p), &c) in pmf.iter().zip(&counts) {
        let freq = c as f64 / n;
        tv += (freq - p).abs();
        chi2 += (c as f64 - n * p).powi(2) / (n * p);
    }
    let dof = pmf.len() - 1;
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?.cdf(chi2)
    };
    Ok(LawMatch { tv_distance: 0.5 * tv, chi2_stat: chi2, dof, p_value, pass: p_value > 0.01 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Closed form: the next value is a step function of the Gaussian increment.
    #[default]
    Exact,
    GaussHermite(usize),
}

/// Nodes and weights for `int e^{-x^2} f(x) dx`.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let n = order;
    let (mut x, mut w) = (vec![0.0; n], vec![0.0; n]);
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        let nf = n as f64;
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 3e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `M_hat_t`: the conditional mean of the next chain value given the chain
/// so far and the Brownian increment `w = W_t - W_{kT/n}` since the last
/// grid time `kT/n < t <= (k+1)T/n`. At `t = 0` it is `s0`.
pub fn brownian_interpolation(
    law: &DiscreteMartingaleLaw,
    sample: &CouplingSample,
    t: f64,
    w: f64,
    quadrature: Quadrature,
) -> Result<f64> {
    if !(t >= 0.0 && t <= law.horizon * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("time {t} outside [0, {}]", law.horizon)));
    }
    if t == 0.0 {
        return Ok(law.s0);
    }
    let h = law.horizon / law.n as f64;
    let k = (((t / h) - 1e-12).ceil() as usize).clamp(1, law.n) - 1;
    let left = (h - (t - k as f64 * h)).max(0.0);
    let c = law.conditional(k, sample.m[k])?;
    let sd = law.step_sd();
    if left <= 1e-14 * h {
        return Ok(c.quantile(norm_cdf(w / sd)));
    }
    let spread = left.sqrt();
    Ok(match quadrature {
        Quadrature::Exact => {
            let cuts = c.cuts(sd);
            let mut below = 0.0;
            let mut total = 0.0;
            for (j, &y) in c.support.iter().enumerate() {
                let upto = if j < cuts.len() { norm_cdf((cuts[j] - w) / spread) } else { 1.0 };
                total += y * (upto - below).max(0.0);
                below = upto.max(below);
            }
            total
        }
        Quadrature::GaussHermite(order) => {
            let (x, wt) = gauss_hermite(order.max(2));
            let sum: f64 = x
                .iter()
                .zip(&wt)
                .map(|(&xi, &wi)| wi * c.quantile(norm_cdf((w + spread * std::f64::consts::SQRT_2 * xi) / sd)))
                .sum();
            sum / std::f64::consts::PI.sqrt()
        }
    })
}

/// Continuous-time law refined by [`DiscreteMartingaleLaw`]s with `n` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Refinement {
    BinomialGbm {
        s0: f64,
        sigma: f64,
        #[serde(rename = "T")]
        horizon: f64,
    },
    Constant {
        s0: f64,
        #[serde(rename = "T")]
        horizon: f64,
    },
}

impl Refinement {
    pub fn law(&self, n: usize) -> DiscreteMartingaleLaw {
        match *self {
            Refinement::BinomialGbm { s0, sigma, horizon } => DiscreteMartingaleLaw::binomial_gbm(s0, sigma, horizon, n),
            Refinement::Constant { s0, horizon } => DiscreteMartingaleLaw::constant(s0, horizon, n),
        }
    }

    fn params(&self) -> (f64, f64, f64) {
        match *self {
            Refinement::BinomialGbm { s0, sigma, horizon } => (s0, sigma, horizon),
            Refinement::Constant { s0, horizon } => (s0, 0.0, horizon),
        }
    }

    /// Exact means of [`functionals`] under the limiting geometric Brownian motion.
    fn target_means(&self) -> [f64; 4] {
        let (s0, sigma, horizon) = self.params();
        let cap = 2.0 * s0;
        let call = |t: f64, k: f64| {
            let v = sigma * t.sqrt();
            if v == 0.0 {
                return (s0 - k).max(0.0);
            }
            let d1 = ((s0 / k).ln() + 0.5 * v * v) / v;
            s0 * norm_cdf(d1) - k * norm_cdf(d1 - v)
        };
        let max_tail = |m: f64| {
            if sigma == 0.0 {
                return if m < s0 { 1.0 } else { 0.0 };
            }
            let a = (m / s0).ln();
            let (mu, v) = (-0.5 * sigma * sigma * horizon, sigma * horizon.sqrt());
            norm_cdf((-a + mu) / v) + (s0 / m) * norm_cdf((-a - mu) / v)
        };
        let steps = 4000;
        let dm = (cap - s0) / steps as f64;
        let simpson: f64 = (0..=steps)
            .map(|i| {
                let wgt = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                wgt * max_tail(s0 + dm * i as f64)
            })
            .sum::<f64>()
            * dm
            / 3.0;
        [
            s0 - call(0.5 * horizon, cap),
            s0 - call(horizon, cap),
            call(horizon, s0) - call(horizon, cap),
            s0 + simpson,
        ]
    }
}

/// The test functionals, all bounded and Lipschitz: the capped value at
/// `T/2` and at `T`, the at-the-money call capped at `s0`, and the running
/// maximum capped at `2 s0`.
fn functionals(path: &[f64], s0: f64) -> [f64; 4] {
    let cap = 2.0 * s0;
    let mid = path[(path.len() - 1) / 2];
    let end = *path.last().unwrap();
    let top = path.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    [mid.min(cap), end.min(cap), (end - s0).max(0.0).min(s0), top.min(cap)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub n: usize,
    /// `max_f |empirical mean of f - target mean of f|`.
    pub proxy: f64,
    /// Standard error of the functional attaining the maximum.
    pub stderr: f64,
    pub errors: [f64; 4],
}

/// Interpolated paths on `fine_steps` points (a multiple of every `n`), one
/// row per refinement level. Samples share the Brownian path across levels.
pub fn weak_distance_diag(
    family: &Refinement,
    n_list: &[usize],
    n_samples: usize,
    fine_steps: usize,
    seed: u64,
) -> Result<Vec<DistanceRow>> {
    if n_samples < 2 || n_list.iter().any(|&n| n == 0 || fine_steps % n != 0) {
        return Err(Error::Precondition("fine grid must refine every level and need >= 2 samples".into()));
    }
    let target = family.target_means();
    let (s0, _, horizon) = family.params();
    let dt = horizon / fine_steps as f64;
    n_list
        .iter()
        .map(|&n| {
            let law = family.law(n);
            law.validate()?;
            let per_block = fine_steps / n;
            let values = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, i as u64);
                    let dw: Vec<f64> = (0..fine_steps).map(|_| dt.sqrt() * normal(&mut rng)).collect();
                    let z: Vec<f64> = dw.chunks(per_block).map(|c| c.iter().sum()).collect();
                    let sample = CouplingSample { m: couple(&law, &z)?, z };
                    let mut path = Vec::with_capacity(fine_steps + 1);
                    path.push(s0);
                    for k in 0..n {
                        let mut w = 0.0;
                        for j in 1..=per_block {
                            w += dw[k * per_block + j - 1];
                            let t = (k * per_block + j) as f64 * dt;
                            let v = if j == per_block {
                                sample.m[k + 1]
                            } else {
                                brownian_interpolation(&law, &sample, t, w, Quadrature::Exact)?
                            };
                            path.push(v);
                        }
                    }
                    Ok(functionals(&path, s0))
                })
                .collect::<Result<Vec<[f64; 4]>>>()?;
            let nf = n_samples as f64;
            let mut errors = [0.0; 4];
            let mut ses = [0.0; 4];
            for f in 0..4 {
                let mean = values.iter().map(|v| v[f]).sum::<f64>() / nf;
                let var = values.iter().map(|v| (v[f] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
                errors[f] = (mean - target[f]).abs();
                ses[f] = (var / nf).sqrt();
            }
            let arg = (0..4).max_by(|&a, &b| errors[a].total_cmp(&errors[b])).unwrap();
            Ok(DistanceRow { n, proxy: errors[arg], stderr: ses[arg], errors })
        })
        .collect()
}

/// Acklam's rational approximation refined by one Halley step.
fn inverse_norm_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

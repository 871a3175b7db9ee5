use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::fbm::{fbm_factor, lower_mul};
use super::{Dynamics, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::substream;

/// One simulated trajectory on the shared grid.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub times: &'a [f64],
    pub s: &'a [f64],
    pub nu: &'a [f64],
    /// Bank account `B_t / B_0`, identical across paths.
    pub b: &'a [f64],
    pub w: &'a [f64],
}

/// Simulated trajectories stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub seed: u64,
    pub scheme: String,
}

impl PathBatch {
    fn row<'a>(&self, v: &'a [f64], p: usize) -> &'a [f64] {
        let m = self.times.len();
        &v[p * m..(p + 1) * m]
    }

    pub fn path(&self, p: usize) -> PathView<'_> {
        PathView {
            times: &self.times,
            s: self.row(&self.s, p),
            nu: self.row(&self.nu, p),
            b: &self.b,
            w: self.row(&self.w, p),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }
}

fn scheme_name(d: &Dynamics) -> &'static str {
    match d {
        Dynamics::Heston { .. } => "heston/full-truncation-euler + log-euler spot",
        Dynamics::HullWhite { .. } => "hull-white/exact lognormal + log-euler spot",
        Dynamics::Scott { .. } => "scott/exact ou + log-euler spot",
        Dynamics::RoughFou { .. } => "rough-fou/cholesky fbm, trapezoid by parts + log-euler spot",
    }
}

/// Grid-level data shared by all paths.
struct Setup {
    times: Vec<f64>,
    dt: f64,
    b: Vec<f64>,
    rates: Vec<f64>,
    fbm: Option<Vec<f64>>,
}

fn setup(spec: &ModelSpec, n_steps: usize, n_paths: usize) -> Result<Setup> {
    spec.validate()?;
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::Precondition("need at least one step and one path".into()));
    }
    let dt = spec.horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let rates: Vec<f64> = times[..n_steps].iter().map(|&t| spec.r.at(t)).collect();
    let mut b = vec![1.0; n_steps + 1];
    let mut acc = 0.0;
    for k in 0..n_steps {
        acc += rates[k] * dt;
        b[k + 1] = acc.exp();
    }
    let fbm = match spec.dynamics {
        Dynamics::RoughFou { hurst, .. } => Some(fbm_factor(hurst, &times[1..])?),
        _ => None,
    };
    Ok(Setup { times, dt, b, rates, fbm })
}

/// Fills `s`, `nu`, `w` (each of length `n_steps + 1`) for one path.
fn fill_path(spec: &ModelSpec, st: &Setup, seed: u64, index: usize, s: &mut [f64], nu: &mut [f64], w: &mut [f64]) {
    let m = st.times.len() - 1;
    let dt = st.dt;
    let sq = dt.sqrt();
    let mut rng = substream(seed, index as u64);
    let zw: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let zh: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rho = spec.rho;
    let rho_c = (1.0 - rho * rho).sqrt();
    // standard normal driving the volatility factor over step k
    let zu = |k: usize| rho * zw[k] + rho_c * zh[k];

    match spec.dynamics {
        Dynamics::Heston { kappa, theta, xi, v0 } => {
            let mut u = v0;
            nu[0] = u.max(0.0).sqrt();
            for k in 0..m {
                let up = u.max(0.0);
                u += kappa * (theta - up) * dt + xi * up.sqrt() * sq * zu(k);
                nu[k + 1] = u.max(0.0).sqrt();
            }
        }
        Dynamics::HullWhite { kappa, theta, u0 } => {
            let mut u = u0;
            nu[0] = u.sqrt();
            for k in 0..m {
                u *= ((kappa - 0.5 * theta * theta) * dt + theta * sq * zu(k)).exp();
                nu[k + 1] = u.sqrt();
            }
        }
        Dynamics::Scott { lambda, kappa, theta, u0 } => {
            let decay = (-kappa * dt).exp();
            let sd = theta * ((1.0 - decay * decay) / (2.0 * kappa)).sqrt();
            let mut u = u0;
            nu[0] = lambda * u.exp();
            for k in 0..m {
                u = u * decay + sd * zu(k);
                nu[k + 1] = lambda * u.exp();
            }
        }
        Dynamics::RoughFou { lambda, kappa, nu0, .. } => {
            let l = st.fbm.as_ref().expect("fbm factor prepared");
            let drivers: Vec<f64> = (0..m).map(zu).collect();
            let mut bh = vec![0.0; m + 1];
            lower_mul(l, &drivers, &mut bh[1..]);
            let u = fou_by_parts(&bh, &st.times, lambda);
            for k in 0..=m {
                nu[k] = nu0 * (kappa * u[k]).exp();
            }
        }
    }

    s[0] = spec.s0;
    w[0] = 0.0;
    for k in 0..m {
        let dw = sq * zw[k];
        w[k + 1] = w[k] + dw;
        s[k + 1] = s[k] * ((st.rates[k] - 0.5 * nu[k] * nu[k]) * dt + nu[k] * dw).exp();
    }
}

/// `U_t = B_t - lambda e^{-lambda t} int_0^t B_u e^{lambda u} du`, the
/// integral by the trapezoid rule on the grid.
pub(crate) fn fou_by_parts(bh: &[f64], times: &[f64], lambda: f64) -> Vec<f64> {
    let mut u = vec![0.0; bh.len()];
    let mut integral = 0.0;
    for k in 1..bh.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        integral += 0.5 * (t1 - t0) * (bh[k - 1] * (lambda * t0).exp() + bh[k] * (lambda * t1).exp());
        u[k] = bh[k] - lambda * (-lambda * t1).exp() * integral;
    }
    u
}

/// Simulates every path and hands it to `f`, in parallel; results come back
/// in path order. Memory stays at one path per worker.
pub fn for_each_path<R, F>(spec: &ModelSpec, n_steps: usize, n_paths: usize, seed: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &PathView<'_>) -> R + Sync,
{
    let st = setup(spec, n_steps, n_paths)?;
    let len = n_steps + 1;
    Ok((0..n_paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; len], vec![0.0; len], vec![0.0; len]),
            |(s, nu, w), p| {
                fill_path(spec, &st, seed, p, s, nu, w);
                let view = PathView { times: &st.times, s, nu, b: &st.b, w };
                f(p, &view)
            },
        )
        .collect())
}

/// Simulates `n_paths` trajectories with `n_steps` steps of size `T / n_steps`.
pub fn simulate(spec: &ModelSpec, n_steps: usize, n_paths: usize, seed: u64) -> Result<PathBatch> {
    let st = setup(spec, n_steps, n_paths)?;
    let len = n_steps + 1;
    let mut s = vec![0.0; len * n_paths];
    let mut nu = vec![0.0; len * n_paths];
    let mut w = vec![0.0; len * n_paths];
    s.par_chunks_mut(len)
        .zip(nu.par_chunks_mut(len))
        .zip(w.par_chunks_mut(len))
        .enumerate()
        .for_each(|(p, ((s, nu), w))| fill_path(spec, &st, seed, p, s, nu, w));
    Ok(PathBatch {
        times: st.times,
        n_paths,
        s,
        nu,
        w,
        b: st.b,
        seed,
        scheme: scheme_name(&spec.dynamics).to_string(),
    })
}

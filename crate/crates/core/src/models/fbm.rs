use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::substream;

/// `Cov(B_s, B_t) = (s^2H + t^2H - |t - s|^2H) / 2`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbmMethod {
    /// Cholesky up to 2048 points, circulant embedding above.
    #[default]
    Auto,
    Cholesky,
    /// Davies-Harte embedding; uniform grids only.
    Circulant,
}

/// Lower Cholesky factor of a symmetric positive definite matrix, row-major
/// packed as full rows.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - dot;
                if d <= 0.0 {
                    return Err(Error::Domain(format!("covariance not positive definite at row {i}")));
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - dot) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky factor of the fBM covariance at the given positive times.
pub(crate) fn fbm_factor(hurst: f64, times: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] = fbm_covariance(hurst, times[i], times[j]);
        }
    }
    cholesky(&cov, n)
}

/// `out = L z` for a packed lower-triangular `L`.
pub(crate) fn lower_mul(l: &[f64], z: &[f64], out: &mut [f64]) {
    let n = z.len();
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        out[i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
    }
}

fn check_grid(times: &[f64], need_uniform: bool) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("time grid must start at 0 and increase".into()));
    }
    if need_uniform {
        let dt = times[1];
        let uniform = times
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - k as f64 * dt).abs() <= 1e-9 * (1.0 + t));
        if !uniform {
            return Err(Error::Precondition("circulant embedding needs a uniform grid".into()));
        }
    }
    Ok(())
}

/// Samples fractional Brownian motion on `times` (starting at 0); each
/// returned path has `B(0) = 0`.
pub fn fbm_sample(hurst: f64, times: &[f64], n_paths: usize, seed: u64, method: FbmMethod) -> Result<Vec<Vec<f64>>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidParameter(format!("Hurst index must lie in (0, 1), got {hurst}")));
    }
    let m = times.len() - 1;
    let circulant = match method {
        FbmMethod::Auto => m > 2048,
        FbmMethod::Cholesky => false,
        FbmMethod::Circulant => true,
    };
    check_grid(times, circulant)?;
    if circulant {
        return davies_harte(hurst, times[1], m, n_paths, seed);
    }
    let l = fbm_factor(hurst, &times[1..])?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, p as u64);
            let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut path = vec![0.0; m + 1];
            lower_mul(&l, &z, &mut path[1..]);
            path
        })
        .collect())
}

fn davies_harte(hurst: f64, dt: f64, m: usize, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let h2 = 2.0 * hurst;
    let scale = dt.powf(h2);
    let gamma = |k: usize| {
        let k = k as f64;
        0.5 * scale * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
    };
    let size = 2 * m;
    let mut row: Vec<Complex<f64>> = (0..size)
        .map(|j| Complex::new(gamma(if j <= m { j } else { size - j }), 0.0))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(size);
    fft.process(&mut row);
    let top = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    if row.iter().any(|c| c.re < -1e-10 * top) {
        return Err(Error::Domain("circulant embedding is not non-negative definite".into()));
    }
    let amp: Vec<f64> = row.iter().map(|c| (c.re.max(0.0) / size as f64).sqrt()).collect();
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, p as u64);
            let mut buf: Vec<Complex<f64>> = amp
                .iter()
                .map(|&a| {
                    let (x, y): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    Complex::new(a * x, a * y)
                })
                .collect();
            fft.process(&mut buf);
            let mut path = vec![0.0; m + 1];
            for k in 0..m {
                path[k + 1] = path[k] + buf[k].re;
            }
            path
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize, t: f64) -> Vec<f64> {
        (0..=m).map(|k| t * k as f64 / m as f64).collect()
    }

    fn sample_cov(paths: &[Vec<f64>], i: usize, j: usize) -> (f64, f64) {
        let n = paths.len() as f64;
        let prods: Vec<f64> = paths.iter().map(|p| p[i] * p[j]).collect();
        let mean = prods.iter().sum::<f64>() / n;
        let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn brownian_case_has_min_covariance() {
        let times = grid(16, 1.0);
        let paths = fbm_sample(0.5, &times, 20_000, 7, FbmMethod::Cholesky).unwrap();
        for (i, j) in [(4, 12), (8, 16), (16, 16)] {
            let (c, se) = sample_cov(&paths, i, j);
            assert!((c - times[i].min(times[j])).abs() < 3.5 * se, "{i},{j}: {c} se {se}");
        }
    }

    #[test]
    fn both_methods_have_unit_variance_at_one() {
        let times = grid(64, 1.0);
        for method in [FbmMethod::Cholesky, FbmMethod::Circulant] {
            for h in [0.1, 0.3, 0.7] {
                let paths = fbm_sample(h, &times, 20_000, 11, method).unwrap();
                let (v, se) = sample_cov(&paths, 64, 64);
                assert!((v - 1.0).abs() < 3.5 * se, "{method:?} H={h}: {v} se {se}");
            }
        }
    }

    #[test]
    fn rough_increments_are_negatively_correlated() {
        let times = grid(32, 1.0);
        let exact = {
            let dt: f64 = 1.0 / 32.0;
            0.5 * dt.powf(0.2) * (2f64.powf(0.2) - 2.0)
        };
        assert!(exact < 0.0);
        let paths = fbm_sample(0.1, &times, 20_000, 3, FbmMethod::Circulant).unwrap();
        let incr: Vec<(f64, f64)> = paths.iter().map(|p| (p[10] - p[9], p[11] - p[10])).collect();
        let n = incr.len() as f64;
        let cov = incr.iter().map(|(a, b)| a * b).sum::<f64>() / n;
        let se = (incr.iter().map(|(a, b)| (a * b - cov).powi(2)).sum::<f64>() / n / n).sqrt();
        assert!(cov < 0.0);
        assert!((cov - exact).abs() < 3.5 * se);
    }

    #[test]
    fn circulant_rejects_uneven_grid() {
        let times = [0.0, 0.1, 0.3, 0.4];
        assert!(fbm_sample(0.3, &times, 2, 1, FbmMethod::Circulant).is_err());
        assert!(fbm_sample(0.3, &times, 2, 1, FbmMethod::Cholesky).is_ok());
    }
}

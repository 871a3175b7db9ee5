//! Dense two-phase simplex for `min c.x` subject to `A x = b`, `x >= 0`.
//! Bland's rule throughout, so degenerate problems terminate.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, obj: &mut [f64], r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            let f = row[col];
            if i != r && f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[col];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = col;
    }

    /// Runs to optimality over columns `< allowed`; `Ok(false)` if unbounded.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize, pivots: &mut usize) -> Result<bool> {
        let rhs = self.width;
        let scale = 1.0 + obj[..allowed].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        loop {
            let Some(col) = (0..allowed).find(|&j| obj[j] < -1e-10 * scale) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_EPS {
                    let ratio = row[rhs] / row[col];
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            let tol = 1e-12 * (1.0 + best.abs());
                            ratio < best - tol || (ratio <= best + tol && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(obj, r, col);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::NoConvergence { iterations: *pivots, last_change: f64::NAN });
            }
        }
    }
}

pub(crate) fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome> {
    let (m, n) = (a.len(), c.len());
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Mismatch("constraint matrix shape".into()));
    }
    let width = n + m;
    let mut rows: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, &bi))| {
            let sign = if bi < 0.0 { -1.0 } else { 1.0 };
            let mut t = vec![0.0; width + 1];
            for j in 0..n {
                t[j] = sign * row[j];
            }
            t[n + i] = 1.0;
            t[width] = sign * bi;
            t
        })
        .collect();
    let b_scale = 1.0 + rows.iter().map(|r| r[width].abs()).fold(0.0, f64::max);

    let mut phase1 = vec![0.0; width + 1];
    for row in &rows {
        for j in 0..n {
            phase1[j] -= row[j];
        }
        phase1[width] -= row[width];
    }
    let mut tab = Tableau { rows: std::mem::take(&mut rows), basis: (n..n + m).collect(), width };
    let mut pivots = 0;
    tab.optimize(&mut phase1, n, &mut pivots)?;
    if -phase1[width] > 1e-9 * b_scale {
        return Ok(LpOutcome::Infeasible);
    }
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                tab.pivot(&mut phase1, r, col);
            }
        }
    }

    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(c);
    for r in 0..m {
        let cb = if tab.basis[r] < n { c[tab.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for (v, t) in obj.iter_mut().zip(&tab.rows[r]) {
                *v -= cb * t;
            }
        }
    }
    if !tab.optimize(&mut obj, n, &mut pivots)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (r, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.rows[r][width];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_programs() {
        // min -x - y, x + y + s = 4, x + 3y + t = 6
        let out = minimize(
            &[-1.0, -1.0, 0.0, 0.0],
            &[vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]],
            &[4.0, 6.0],
        )
        .unwrap();
        let LpOutcome::Optimal { value, .. } = out else { panic!("{out:?}") };
        assert!((value + 4.0).abs() < 1e-12);

        assert_eq!(minimize(&[1.0], &[vec![1.0], vec![1.0]], &[1.0, 2.0]).unwrap(), LpOutcome::Infeasible);
        assert_eq!(minimize(&[-1.0, 0.0], &[vec![1.0, -1.0]], &[1.0]).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let out = minimize(&[1.0, 2.0], &[vec![1.0, 1.0], vec![2.0, 2.0]], &[3.0, 6.0]).unwrap();
        let LpOutcome::Optimal { x, value } = out else { panic!("{out:?}") };
        assert_eq!(x, vec![3.0, 0.0]);
        assert_eq!(value, 3.0);
    }
}

//! Restarted GMRES for complex linear systems given as a matrix-vector product.

use crate::error::{IspError, Result};
use crate::C64;

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Stop when `||b - A x|| <= tol * ||b||`.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iter: 2000, tol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` starting from zero.
pub fn solve(apply: impl Fn(&[C64]) -> Vec<C64>, b: &[C64], opts: GmresOptions) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![C64::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < opts.max_iter {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            break;
        }
        let m = opts.restart.min(opts.max_iter - iterations).max(1);
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|z| z / beta).collect());
        let mut hess = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(vi, &w);
                    hess[i][k] += hij;
                    for (wj, vij) in w.iter_mut().zip(vi) {
                        *wj -= hij * vij;
                    }
                }
            }
            let wn = norm(&w);
            hess[k + 1][k] = C64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * hess[i][k] + sn[i].conj() * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let (a, bb) = (hess[k][k], hess[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[k] = C64::new(1.0, 0.0);
                sn[k] = C64::new(0.0, 0.0);
            } else {
                cs[k] = a / den;
                sn[k] = bb / den;
            }
            hess[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            hess[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            iterations += 1;
            k_used = k + 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= opts.tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|z| z / wn).collect());
        }
        // back substitution
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vji) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vji;
            }
        }
        if rel <= opts.tol {
            let ax = apply(&x);
            rel = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
            if rel <= opts.tol * 10.0 {
                return Ok(GmresOutcome { x, iterations, relative_residual: rel });
            }
        }
    }
    if rel <= opts.tol {
        return Ok(GmresOutcome { x, iterations, relative_residual: rel });
    }
    Err(IspError::NonConvergence { sweeps: iterations, last_change: rel })
}

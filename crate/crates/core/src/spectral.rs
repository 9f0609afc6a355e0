//! Half-plane projections of functions sampled on a [`LambdaGrid`].
//!
//! Functions here decay only like `1/lambda`, so a plain FFT mask would alias
//! the slow tails.  Each routine first subtracts a small rational tail model
//! whose projections are known exactly, then treats the fast-decaying residual
//! numerically: a sinc-type discrete Hilbert transform for the split, the
//! trapezoid rule for inverse transforms and Cauchy integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{IspError, Result};
use crate::line::{Analyticity, LambdaGrid, LineMatrixFunction};
use crate::{CMatrix, C64, I};

/// Number of rational terms in the tail model.
pub const TAIL_TERMS: usize = 4;

/// Which half-plane the tail basis is analytic in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Poles at `-i kappa`; analytic above the axis.
    Plus,
    /// Poles at `+i kappa`; analytic below the axis.
    Minus,
}

/// Least-squares fit of `sum_p c_p (L / (lambda -+ i kappa))^p` to the
/// samples with `|lambda| >= L / 2`.
#[derive(Clone, Debug)]
pub struct TailModel {
    pub side: Side,
    pub kappa: f64,
    scale: f64,
    /// `basis[j][p]` at grid node `j`.
    basis: Vec<[C64; TAIL_TERMS]>,
    fit_nodes: Vec<usize>,
    pinv: CMatrix,
}

impl TailModel {
    pub fn new(grid: &LambdaGrid, side: Side, kappa: f64) -> Self {
        let scale = grid.lambda_max;
        let shift = match side {
            Side::Plus => C64::new(0.0, kappa),
            Side::Minus => C64::new(0.0, -kappa),
        };
        let basis: Vec<[C64; TAIL_TERMS]> = grid
            .points()
            .into_iter()
            .map(|l| {
                let u = scale / (l + shift);
                let mut row = [C64::new(0.0, 0.0); TAIL_TERMS];
                let mut pw = C64::new(1.0, 0.0);
                for r in row.iter_mut() {
                    pw *= u;
                    *r = pw;
                }
                row
            })
            .collect();
        let fit_nodes: Vec<usize> = (0..grid.len()).filter(|&j| grid.point(j).abs() >= 0.5 * scale).collect();
        let a = DMatrix::from_fn(fit_nodes.len(), TAIL_TERMS, |r, c| basis[fit_nodes[r]][c]);
        let pinv = a.pseudo_inverse(1e-13).expect("tail basis has full rank");
        Self { side, kappa, scale, basis, fit_nodes, pinv }
    }

    pub fn coefficients(&self, samples: &[C64]) -> [C64; TAIL_TERMS] {
        let mut out = [C64::new(0.0, 0.0); TAIL_TERMS];
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.fit_nodes.iter().enumerate().map(|(r, &j)| self.pinv[(p, r)] * samples[j]).sum();
        }
        out
    }

    pub fn sample(&self, coeffs: &[C64; TAIL_TERMS]) -> Vec<C64> {
        self.basis.iter().map(|row| row.iter().zip(coeffs).map(|(b, c)| b * c).sum()).collect()
    }

    /// The model at an arbitrary complex point.
    pub fn eval(&self, coeffs: &[C64; TAIL_TERMS], z: C64) -> C64 {
        let shift = match self.side {
            Side::Plus => C64::new(0.0, self.kappa),
            Side::Minus => C64::new(0.0, -self.kappa),
        };
        let u = self.scale / (z + shift);
        let mut pw = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for c in coeffs {
            pw *= u;
            acc += c * pw;
        }
        acc
    }

    /// Density `g(s)`, `s > 0`, whose one-sided transform is the model:
    /// `int g(s) e^{i lambda s} ds` for [`Side::Plus`], `e^{-i lambda s}` for [`Side::Minus`].
    pub fn density(&self, coeffs: &[C64; TAIL_TERMS], s: f64) -> C64 {
        // 1/(l + i k)^p <-> (-i)^p s^{p-1} e^{-k s} / (p-1)!, and i^p for the minus side
        let unit = match self.side {
            Side::Plus => -I,
            Side::Minus => I,
        };
        let decay = (-self.kappa * s).exp();
        let mut acc = C64::new(0.0, 0.0);
        let mut fact = 1.0;
        let mut unit_pow = C64::new(1.0, 0.0);
        let mut scale_pow = 1.0;
        let mut s_pow = 1.0;
        for (p, c) in coeffs.iter().enumerate() {
            if p > 0 {
                fact *= p as f64;
                s_pow *= s;
            }
            unit_pow *= unit;
            scale_pow *= self.scale;
            acc += c * scale_pow * unit_pow * s_pow / fact;
        }
        acc * decay
    }
}

/// Additive split `f = P_plus f + P_minus f` on a fixed grid.
pub struct CauchyProjector {
    grid: LambdaGrid,
    tail: TailModel,
    edge_tol: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<C64>,
}

impl std::fmt::Debug for CauchyProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CauchyProjector")
            .field("grid", &self.grid)
            .field("edge_tol", &self.edge_tol)
            .finish()
    }
}

/// Default bound on the tail-fit residual at the grid ends.
pub const EDGE_TOL: f64 = 1e-3;

impl CauchyProjector {
    pub fn new(grid: LambdaGrid) -> Self {
        Self::with_edge_tolerance(grid, EDGE_TOL)
    }

    pub fn with_edge_tolerance(grid: LambdaGrid, edge_tol: f64) -> Self {
        let n = grid.len();
        let len = 2 * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        // discrete Hilbert kernel 2/(pi m) on odd offsets, stored circularly
        let mut kernel = vec![C64::new(0.0, 0.0); len];
        for m in 1..n {
            if m % 2 == 1 {
                let v = 2.0 / (PI * m as f64);
                kernel[m] = C64::new(v, 0.0);
                kernel[len - m] = C64::new(-v, 0.0);
            }
        }
        fft.process(&mut kernel);
        Self {
            grid,
            tail: TailModel::new(&grid, Side::Plus, 1.0),
            edge_tol,
            fft,
            ifft,
            kernel_hat: kernel,
        }
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn edge_tolerance(&self) -> f64 {
        self.edge_tol
    }

    /// `(H r)(lambda_j) = (1/pi) PV int r(s) / (lambda_j - s) ds`.
    fn hilbert(&self, r: &[C64]) -> Vec<C64> {
        let n = r.len();
        let mut buf = vec![C64::new(0.0, 0.0); 2 * n];
        buf[..n].copy_from_slice(r);
        self.fft.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.ifft.process(&mut buf);
        let norm = 1.0 / (2 * n) as f64;
        buf.truncate(n);
        buf.iter_mut().for_each(|b| *b *= norm);
        buf
    }

    /// Plus part without the edge check; linear in `f`.
    pub fn plus_unchecked(&self, f: &[C64]) -> Vec<C64> {
        let coeffs = self.tail.coefficients(f);
        let model = self.tail.sample(&coeffs);
        let r: Vec<C64> = f.iter().zip(&model).map(|(a, b)| a - b).collect();
        let h = self.hilbert(&r);
        model
            .iter()
            .zip(r.iter().zip(&h))
            .map(|(m, (ri, hi))| m + 0.5 * ri + 0.5 * I * hi)
            .collect()
    }

    /// Largest tail-fit residual at the two grid ends.
    pub fn edge_residual(&self, f: &[C64]) -> f64 {
        let coeffs = self.tail.coefficients(f);
        let n = f.len();
        [0, n - 1]
            .iter()
            .map(|&j| {
                let model: C64 = self.tail.basis[j].iter().zip(&coeffs).map(|(b, c)| b * c).sum();
                (f[j] - model).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `(f_plus, f_minus)` for one scalar sample vector.
    pub fn split_samples(&self, f: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        if f.len() != self.grid.len() {
            return Err(IspError::DimensionMismatch(format!(
                "{} samples for a grid of {}",
                f.len(),
                self.grid.len()
            )));
        }
        let residual = self.edge_residual(f);
        if !(residual <= self.edge_tol) {
            return Err(IspError::EdgeDecayViolation { residual, tolerance: self.edge_tol });
        }
        let plus = self.plus_unchecked(f);
        let minus = f.iter().zip(&plus).map(|(a, b)| a - b).collect();
        Ok((plus, minus))
    }

    /// Entrywise split of a matrix function; the parts are tagged plus and minus.
    pub fn split(&self, f: &LineMatrixFunction) -> Result<(LineMatrixFunction, LineMatrixFunction)> {
        if f.grid != self.grid {
            return Err(IspError::DimensionMismatch("function and projector grids differ".into()));
        }
        let parts: Vec<(Vec<C64>, Vec<C64>)> = f
            .entries()
            .par_iter()
            .map(|e| self.split_samples(e))
            .collect::<Result<_>>()?;
        let delta = match f.analyticity {
            Analyticity::Strip(d) | Analyticity::Plus(d) | Analyticity::Minus(d) => d,
            Analyticity::None => 0.0,
        };
        let plus: Vec<Vec<C64>> = parts.iter().map(|p| p.0.clone()).collect();
        let minus: Vec<Vec<C64>> = parts.into_iter().map(|p| p.1).collect();
        Ok((
            LineMatrixFunction::from_entries(self.grid, f.dim, &plus, Analyticity::Plus(delta)),
            LineMatrixFunction::from_entries(self.grid, f.dim, &minus, Analyticity::Minus(delta)),
        ))
    }
}

/// Values of a one-sided function at points off the real axis, by the
/// Cauchy integral of its boundary values.
#[derive(Clone, Debug)]
pub struct CauchyEvaluator {
    grid: LambdaGrid,
    tail: TailModel,
}

impl CauchyEvaluator {
    pub fn new(grid: LambdaGrid, side: Side) -> Self {
        Self { grid, tail: TailModel::new(&grid, side, 1.0) }
    }

    /// `f(z)` for `z` on the analytic side (`Im z > 0` for plus, `< 0` for minus).
    pub fn eval(&self, f: &[C64], z: C64) -> C64 {
        let coeffs = self.tail.coefficients(f);
        let model = self.tail.sample(&coeffs);
        let h = self.grid.step();
        let integral: C64 = self
            .grid
            .points()
            .into_iter()
            .zip(f.iter().zip(&model))
            .map(|(l, (fi, mi))| (fi - mi) * h / (l - z))
            .sum();
        let cauchy = integral / (2.0 * PI * I);
        let sign = match self.tail.side {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        };
        self.tail.eval(&coeffs, z) + sign * cauchy
    }
}

/// Recovers `c(s)` on `s_points` from a one-sided transform sampled on `grid`:
/// `C(lambda) = int_0^inf c(s) e^{i lambda s} ds` for [`Side::Plus`],
/// `e^{-i lambda s}` for [`Side::Minus`].
pub fn inverse_half_line_transform(grid: &LambdaGrid, side: Side, samples: &[C64], s_points: &[f64]) -> Vec<C64> {
    let tail = TailModel::new(grid, side, 1.0);
    inverse_with_model(grid, &tail, samples, s_points)
}

/// As [`inverse_half_line_transform`], reusing a prebuilt tail model.
pub fn inverse_with_model(grid: &LambdaGrid, tail: &TailModel, samples: &[C64], s_points: &[f64]) -> Vec<C64> {
    let coeffs = tail.coefficients(samples);
    let model = tail.sample(&coeffs);
    let residual: Vec<C64> = samples.iter().zip(&model).map(|(a, b)| a - b).collect();
    let lambdas = grid.points();
    let h = grid.step();
    let sign = match tail.side {
        Side::Plus => -1.0,
        Side::Minus => 1.0,
    };
    s_points
        .par_iter()
        .map(|&s| {
            // e^{sign i lambda_j s}, advanced by a fixed rotation
            let rot = (I * (sign * h * s)).exp();
            let mut phase = (I * (sign * lambdas[0] * s)).exp();
            let mut acc = C64::new(0.0, 0.0);
            for (j, r) in residual.iter().enumerate() {
                if j % 256 == 0 {
                    phase = (I * (sign * lambdas[j] * s)).exp();
                }
                acc += r * phase;
                phase *= rot;
            }
            tail.density(&coeffs, s) + acc * h / (2.0 * PI)
        })
        .collect()
}

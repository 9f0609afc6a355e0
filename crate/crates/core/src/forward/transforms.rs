//! Half-line transforms of the kernels and the scattering quantities built
//! from them.

use rayon::prelude::*;

use super::TOKernels;
use crate::domain::{BoundaryMatrix, Dispersion};
use crate::error::{IspError, Result};
use crate::line::{Analyticity, LambdaGrid, LineMatrixFunction};
use crate::quad::{integrate_with, FilonWeights};
use crate::{CMatrix, C64};

/// The four block transforms `A11-, A21-, A12+, A22+`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTransforms {
    pub a11_minus: LineMatrixFunction,
    pub a21_minus: LineMatrixFunction,
    pub a12_plus: LineMatrixFunction,
    pub a22_plus: LineMatrixFunction,
}

impl BlockTransforms {
    pub fn grid(&self) -> LambdaGrid {
        self.a11_minus.grid
    }

    pub fn n(&self) -> usize {
        self.a11_minus.dim
    }

    /// Splits a `2n x 2n` function `int K(0,t) e^{i lambda sigma t} dt` into blocks.
    pub fn from_full(full: &LineMatrixFunction, strips: (f64, f64)) -> Self {
        let n = full.dim / 2;
        Self {
            a11_minus: full.block(0, 0, n).with_analyticity(Analyticity::Minus(strips.0)),
            a21_minus: full.block(n, 0, n).with_analyticity(Analyticity::Minus(strips.0)),
            a12_plus: full.block(0, n, n).with_analyticity(Analyticity::Plus(strips.1)),
            a22_plus: full.block(n, n, n).with_analyticity(Analyticity::Plus(strips.1)),
        }
    }

    /// `[[A11-, A12+], [A21-, A22+]]` at grid node `j`.
    pub fn full_at(&self, j: usize) -> CMatrix {
        let n = self.n();
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a11_minus.values[j]);
        m.view_mut((0, n), (n, n)).copy_from(&self.a12_plus.values[j]);
        m.view_mut((n, 0), (n, n)).copy_from(&self.a21_minus.values[j]);
        m.view_mut((n, n), (n, n)).copy_from(&self.a22_plus.values[j]);
        m
    }

    pub fn zeros(grid: LambdaGrid, n: usize) -> Self {
        let z = LineMatrixFunction::zeros(grid, n, Analyticity::None);
        Self { a11_minus: z.clone(), a21_minus: z.clone(), a12_plus: z.clone(), a22_plus: z }
    }

    /// Largest elementwise difference over the four blocks.
    pub fn max_distance(&self, other: &Self) -> f64 {
        [
            self.a11_minus.max_distance(&other.a11_minus),
            self.a21_minus.max_distance(&other.a21_minus),
            self.a12_plus.max_distance(&other.a12_plus),
            self.a22_plus.max_distance(&other.a22_plus),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Half-widths `(minus, plus)` of the strips where the minus and plus
/// transforms stay analytic: `-theta eps / xi_1` and `theta eps / xi_2n`.
pub fn strip_widths(kernels: &TOKernels, disp: &Dispersion) -> (f64, f64) {
    let te = kernels.theta * kernels.eps;
    (-te / disp.xi_first(), te / disp.xi_last())
}

/// `int_0^T K(0, t) e^{i lambda sigma t} dt` at one (possibly complex) `lambda`.
pub fn transforms_at(kernels: &TOKernels, disp: &Dispersion, lambda: C64) -> CMatrix {
    let m = kernels.m();
    let entries: Vec<(usize, usize, Vec<C64>)> = live_entries(kernels);
    let mut out = CMatrix::zeros(m, m);
    for c in 0..m {
        let w = FilonWeights::new(lambda * disp.speed(c), kernels.h);
        for (r, cc, samples) in entries.iter().filter(|e| e.1 == c) {
            out[(*r, *cc)] = integrate_with(samples, 0.0, &w);
        }
    }
    out
}

fn live_entries(kernels: &TOKernels) -> Vec<(usize, usize, Vec<C64>)> {
    let m = kernels.m();
    let mut out = Vec::new();
    for r in 0..m {
        for c in 0..m {
            let s = kernels.boundary_entry(r, c);
            if s.iter().any(|z| z.norm() != 0.0) {
                out.push((r, c, s));
            }
        }
    }
    out
}

/// Block transforms on every grid node.
pub fn kernel_transforms(kernels: &TOKernels, disp: &Dispersion, grid: &LambdaGrid) -> Result<BlockTransforms> {
    if disp.n() != kernels.n {
        return Err(IspError::DimensionMismatch("kernels and dispersion disagree on n".into()));
    }
    let m = kernels.m();
    let entries = live_entries(kernels);
    let values: Vec<CMatrix> = grid
        .points()
        .par_iter()
        .map(|&l| {
            let mut out = CMatrix::zeros(m, m);
            for c in 0..m {
                if !entries.iter().any(|e| e.1 == c) {
                    continue;
                }
                let w = FilonWeights::new(C64::new(l * disp.speed(c), 0.0), kernels.h);
                for (r, cc, samples) in entries.iter().filter(|e| e.1 == c) {
                    out[(*r, *cc)] = integrate_with(samples, 0.0, &w);
                }
            }
            out
        })
        .collect();
    let full = LineMatrixFunction::new(*grid, values, Analyticity::None)?;
    Ok(BlockTransforms::from_full(&full, strip_widths(kernels, disp)))
}

/// `(A_H+, A_H-)` from one set of block values.
pub fn assemble_ah_at(a11: &CMatrix, a21: &CMatrix, a12: &CMatrix, a22: &CMatrix, h: &BoundaryMatrix) -> (CMatrix, CMatrix) {
    let hm = h.matrix();
    let hi = h.inverse();
    let plus = a22 - hm * a12;
    let minus = hm * a11 * hi - a21 * hi;
    (plus, minus)
}

/// `A_H+ = A22+ - H A12+`, `A_H- = H A11- H^{-1} - A21- H^{-1}`.
pub fn assemble_ah(blocks: &BlockTransforms, h: &BoundaryMatrix) -> Result<(LineMatrixFunction, LineMatrixFunction)> {
    let n = blocks.n();
    if h.n() != n {
        return Err(IspError::DimensionMismatch(format!("H is {0}x{0} but blocks are {n}x{n}", h.n())));
    }
    let grid = blocks.grid();
    let mut plus = Vec::with_capacity(grid.len());
    let mut minus = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (p, m) = assemble_ah_at(
            &blocks.a11_minus.values[j],
            &blocks.a21_minus.values[j],
            &blocks.a12_plus.values[j],
            &blocks.a22_plus.values[j],
            h,
        );
        plus.push(p);
        minus.push(m);
    }
    Ok((
        LineMatrixFunction::new(grid, plus, blocks.a12_plus.analyticity)?,
        LineMatrixFunction::new(grid, minus, blocks.a11_minus.analyticity)?,
    ))
}

fn strip_of(a: Analyticity) -> Option<f64> {
    match a {
        Analyticity::Plus(d) | Analyticity::Minus(d) | Analyticity::Strip(d) => Some(d),
        Analyticity::None => None,
    }
}

/// `S_H = (I + A_H+)^{-1} (I + A_H-)` pointwise.
pub fn scattering_matrix(
    ah_plus: &LineMatrixFunction,
    ah_minus: &LineMatrixFunction,
    singularity_tol: f64,
) -> Result<LineMatrixFunction> {
    ah_plus.check_same_grid(ah_minus)?;
    let n = ah_plus.dim;
    let id = CMatrix::identity(n, n);
    let pts = ah_plus.grid.points();
    let mut values = Vec::with_capacity(pts.len());
    for (j, &l) in pts.iter().enumerate() {
        let left = &id + &ah_plus.values[j];
        let det_abs = left.determinant().norm();
        if !(det_abs > singularity_tol) {
            return Err(IspError::SingularFactor { lambda: l, det_abs });
        }
        let lu = left.lu();
        let s = lu
            .solve(&(&id + &ah_minus.values[j]))
            .ok_or(IspError::SingularFactor { lambda: l, det_abs })?;
        values.push(s);
    }
    let tag = match (strip_of(ah_plus.analyticity), strip_of(ah_minus.analyticity)) {
        (Some(a), Some(b)) => Analyticity::Strip(a.min(b)),
        _ => Analyticity::None,
    };
    LineMatrixFunction::new(ah_plus.grid, values, tag)
}

/// `S_H(lambda)` at a single real `lambda`, off the grid.
pub fn scattering_at(kernels: &TOKernels, disp: &Dispersion, h: &BoundaryMatrix, lambda: f64, singularity_tol: f64) -> Result<CMatrix> {
    let n = disp.n();
    if h.n() != n {
        return Err(IspError::DimensionMismatch(format!("H is {0}x{0} but blocks are {n}x{n}", h.n())));
    }
    let full = transforms_at(kernels, disp, C64::new(lambda, 0.0));
    let blk = |r: usize, c: usize| full.view((r, c), (n, n)).into_owned();
    let (plus, minus) = assemble_ah_at(&blk(0, 0), &blk(n, 0), &blk(0, n), &blk(n, n), h);
    let id = CMatrix::identity(n, n);
    let left = &id + plus;
    let det_abs = left.determinant().norm();
    if !(det_abs > singularity_tol) {
        return Err(IspError::SingularFactor { lambda, det_abs });
    }
    left.lu().solve(&(&id + minus)).ok_or(IspError::SingularFactor { lambda, det_abs })
}

/// `P = [[I + A11-, A12+], [A21-, I + A22+]]` and `Pi = P^{-1}`.
pub fn transmission_matrix(
    blocks: &BlockTransforms,
    singularity_tol: f64,
) -> Result<(LineMatrixFunction, LineMatrixFunction)> {
    let grid = blocks.grid();
    let m = 2 * blocks.n();
    let id = CMatrix::identity(m, m);
    let pts = grid.points();
    let mut p_vals = Vec::with_capacity(grid.len());
    let mut pi_vals = Vec::with_capacity(grid.len());
    for (j, &l) in pts.iter().enumerate() {
        let p = &id + blocks.full_at(j);
        let det_abs = p.determinant().norm();
        if !(det_abs > singularity_tol) {
            return Err(IspError::SingularP { lambda: l, det_abs });
        }
        let pi = p.clone().try_inverse().ok_or(IspError::SingularP { lambda: l, det_abs })?;
        p_vals.push(p);
        pi_vals.push(pi);
    }
    Ok((
        LineMatrixFunction::new(grid, p_vals, Analyticity::None)?,
        LineMatrixFunction::new(grid, pi_vals, Analyticity::None)?,
    ))
}

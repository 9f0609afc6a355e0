//! Matrix Riemann-Hilbert machinery on the real line.
//!
//! Factorization convention: given `S(lambda) -> I` at infinity, find `a`
//! analytic above the axis and `b` analytic below, both vanishing at
//! infinity, with
//!
//! ```text
//! (I + a) S = I + b.
//! ```
//!
//! Writing `g = S - I` and applying the plus projection gives the
//! second-kind equation `a + P+(a g) = -P+(g)`, solved matrix-free with
//! GMRES (each operator application costs `m^2` FFT-based projections).

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{BoundaryMatrix, SINGULARITY_TOL};
use crate::error::{IspError, Result};
use crate::forward::BlockTransforms;
use crate::gmres::{self, GmresOptions};
use crate::line::{Analyticity, LambdaGrid, LineMatrixFunction};
use crate::rational::RationalMatrix;
use crate::spectral::CauchyProjector;
use crate::{CMatrix, C64};

/// Numeric split with the default edge tolerance.
pub fn plemelj_split(f: &LineMatrixFunction) -> Result<(LineMatrixFunction, LineMatrixFunction)> {
    CauchyProjector::new(f.grid).split(f)
}

/// Numeric split with a prepared projector.
pub fn plemelj_split_with(
    f: &LineMatrixFunction,
    projector: &CauchyProjector,
) -> Result<(LineMatrixFunction, LineMatrixFunction)> {
    projector.split(f)
}

/// Exact split of a rational matrix by pole half-plane.
pub fn plemelj_split_exact(f: &RationalMatrix) -> Result<(RationalMatrix, RationalMatrix)> {
    f.split()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhMethod {
    Dense,
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhOptions {
    pub singularity_tol: f64,
    pub tol: f64,
    /// Systems with at most this many unknowns are solved densely.
    pub dense_limit: usize,
    /// Pivot ratio below which the dense system counts as singular.
    pub rank_tol: f64,
}

impl Default for RhOptions {
    fn default() -> Self {
        Self { singularity_tol: SINGULARITY_TOL, tol: 1e-12, dense_limit: 1024, rank_tol: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct RhSolution {
    pub ah_plus: LineMatrixFunction,
    pub ah_minus: LineMatrixFunction,
    pub method: RhMethod,
    pub iterations: usize,
    /// `max |(I + a) S - (I + b)|` over the grid.
    pub factorization_residual: f64,
    /// Largest lower-half-plane content left in `a`.
    pub plus_defect: f64,
}

/// Winding number of `det S` along the grid, closed through infinity.
pub fn winding_number(s: &LineMatrixFunction) -> i64 {
    let dets: Vec<C64> = s.values.iter().map(|v| v.determinant()).collect();
    let mut total = 0.0;
    for k in 0..dets.len() {
        let a = dets[k];
        let b = dets[(k + 1) % dets.len()];
        total += (b / a).arg();
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

fn flatten(f: &[CMatrix], dim: usize) -> Vec<C64> {
    // entry-major: all samples of entry (0,0), then (0,1), ...
    let n = f.len();
    let mut out = vec![C64::new(0.0, 0.0); n * dim * dim];
    for (j, v) in f.iter().enumerate() {
        for r in 0..dim {
            for c in 0..dim {
                out[(r * dim + c) * n + j] = v[(r, c)];
            }
        }
    }
    out
}

fn unflatten(x: &[C64], dim: usize, n: usize) -> Vec<CMatrix> {
    (0..n)
        .map(|j| CMatrix::from_fn(dim, dim, |r, c| x[(r * dim + c) * n + j]))
        .collect()
}

/// `x -> P+(x)` entrywise on the flattened layout.
fn project_plus(proj: &CauchyProjector, x: &[C64], n: usize) -> Vec<C64> {
    x.par_chunks(n).flat_map_iter(|e| proj.plus_unchecked(e)).collect()
}

/// `a -> a + P+(a g)`.
fn apply_operator(proj: &CauchyProjector, g: &[CMatrix], x: &[C64], dim: usize) -> Vec<C64> {
    let n = g.len();
    let a = unflatten(x, dim, n);
    let prod: Vec<CMatrix> = a.iter().zip(g).map(|(ai, gi)| ai * gi).collect();
    let p = project_plus(proj, &flatten(&prod, dim), n);
    x.iter().zip(&p).map(|(u, v)| u + v).collect()
}

/// Canonical factorization of `S_H`: returns `A_H+ = a` and `A_H- = b`.
pub fn solve_regular_rh(s: &LineMatrixFunction) -> Result<RhSolution> {
    solve_regular_rh_with(s, &CauchyProjector::new(s.grid), &RhOptions::default())
}

pub fn solve_regular_rh_with(s: &LineMatrixFunction, proj: &CauchyProjector, opts: &RhOptions) -> Result<RhSolution> {
    if proj.grid() != &s.grid {
        return Err(IspError::DimensionMismatch("projector and S_H grids differ".into()));
    }
    let dim = s.dim;
    let n = s.grid.len();
    let pts = s.grid.points();
    for (v, &l) in s.values.iter().zip(&pts) {
        let det_abs = v.determinant().norm();
        if !(det_abs > opts.singularity_tol) {
            return Err(IspError::SingularScattering { lambda: l, det_abs });
        }
    }
    let id = CMatrix::identity(dim, dim);
    let g: Vec<CMatrix> = s.values.iter().map(|v| v - &id).collect();
    let g_flat = flatten(&g, dim);
    for e in g_flat.chunks(n) {
        let residual = proj.edge_residual(e);
        if residual > proj.edge_tolerance() {
            return Err(IspError::EdgeDecayViolation { residual, tolerance: proj.edge_tolerance() });
        }
    }
    let winding = winding_number(s);
    if winding != 0 {
        return Err(IspError::FredholmSingular {
            detail: format!("det S_H has winding number {winding}; the factorization index is nonzero"),
        });
    }
    let rhs: Vec<C64> = project_plus(proj, &g_flat, n).into_iter().map(|z| -z).collect();
    let unknowns = n * dim * dim;

    let (x, method, iterations) = if unknowns <= opts.dense_limit {
        let mut mat = CMatrix::zeros(unknowns, unknowns);
        let mut unit = vec![C64::new(0.0, 0.0); unknowns];
        for k in 0..unknowns {
            unit[k] = C64::new(1.0, 0.0);
            let col = apply_operator(proj, &g, &unit, dim);
            mat.set_column(k, &DVector::from_vec(col));
            unit[k] = C64::new(0.0, 0.0);
        }
        let lu = mat.full_piv_lu();
        let diag = lu.u().diagonal();
        let (mx, mn) = diag.iter().fold((0.0f64, f64::INFINITY), |(a, b), z| (a.max(z.norm()), b.min(z.norm())));
        if !(mn > opts.rank_tol * mx) {
            return Err(IspError::FredholmSingular {
                detail: format!("pivot ratio {:e} below {:e}", mn / mx, opts.rank_tol),
            });
        }
        let sol = lu
            .solve(&DVector::from_vec(rhs))
            .ok_or_else(|| IspError::FredholmSingular { detail: "dense solve failed".into() })?;
        (sol.iter().copied().collect::<Vec<_>>(), RhMethod::Dense, 1)
    } else {
        let out = gmres::solve(
            |v| apply_operator(proj, &g, v, dim),
            &rhs,
            GmresOptions { restart: 80, max_iter: 1600, tol: opts.tol },
        )
        .map_err(|e| IspError::FredholmSingular { detail: format!("iterative solve stalled: {e}") })?;
        (out.x, RhMethod::Gmres, out.iterations)
    };

    let a = unflatten(&x, dim, n);
    let raw_b: Vec<CMatrix> = a.iter().zip(&s.values).map(|(ai, si)| (&id + ai) * si - &id).collect();
    let raw_flat = flatten(&raw_b, dim);
    let b_plus = project_plus(proj, &raw_flat, n);
    let b_flat: Vec<C64> = raw_flat.iter().zip(&b_plus).map(|(u, v)| u - v).collect();
    let b = unflatten(&b_flat, dim, n);
    let a_plus = project_plus(proj, &x, n);
    let plus_defect = x.iter().zip(&a_plus).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);

    let delta = match s.analyticity {
        Analyticity::Strip(d) | Analyticity::Plus(d) | Analyticity::Minus(d) => d,
        Analyticity::None => 0.0,
    };
    let ah_plus = LineMatrixFunction::new(s.grid, a, Analyticity::Plus(delta))?;
    let ah_minus = LineMatrixFunction::new(s.grid, b, Analyticity::Minus(delta))?;
    let factorization_residual = factorization_residual(s, &ah_plus, &ah_minus);
    Ok(RhSolution { ah_plus, ah_minus, method, iterations, factorization_residual, plus_defect })
}

/// `max |(I + a) S - (I + b)|` over the grid.
pub fn factorization_residual(s: &LineMatrixFunction, a: &LineMatrixFunction, b: &LineMatrixFunction) -> f64 {
    let id = CMatrix::identity(s.dim, s.dim);
    s.values
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(si, (ai, bi))| ((&id + ai) * si - (&id + bi)).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockRecovery {
    pub blocks_max: f64,
    /// `max |A22+ via H1 - A22+ via H2|`.
    pub a22_form_gap: f64,
    /// `max |A21- via H1 - A21- via H2|`.
    pub a21_form_gap: f64,
    /// Largest entry found where the block structure forces zero.
    pub structure_defect: f64,
}

/// Block transforms from two factorizations with boundary matrices `H1`, `H2`.
///
/// Fails with [`IspError::InconsistentInputs`] when the recovered blocks
/// carry more than `consistency_tol` (relative) in positions that a single
/// M-canonical potential keeps zero. The check is necessary only: mixtures
/// whose sparsity keeps those positions empty pass it.
#[allow(clippy::too_many_arguments)]
pub fn recover_blocks(
    ah1_plus: &LineMatrixFunction,
    ah1_minus: &LineMatrixFunction,
    ah2_plus: &LineMatrixFunction,
    ah2_minus: &LineMatrixFunction,
    h1: &BoundaryMatrix,
    h2: &BoundaryMatrix,
    singularity_tol: f64,
    consistency_tol: f64,
) -> Result<(BlockTransforms, BlockRecovery)> {
    for f in [ah1_minus, ah2_plus, ah2_minus] {
        ah1_plus.check_same_grid(f)?;
    }
    let n = ah1_plus.dim;
    if h1.n() != n || h2.n() != n {
        return Err(IspError::DimensionMismatch("boundary matrices must match the block size".into()));
    }
    let diff = h1.matrix() - h2.matrix();
    let det_abs = diff.determinant().norm();
    if !(det_abs > singularity_tol) {
        return Err(IspError::DegenerateBoundaryPair { det_abs });
    }
    let dinv = diff.try_inverse().ok_or(IspError::DegenerateBoundaryPair { det_abs })?;
    let (m1, m2) = (h1.matrix(), h2.matrix());
    let len = ah1_plus.grid.len();
    let mut a12 = Vec::with_capacity(len);
    let mut a11 = Vec::with_capacity(len);
    let mut a22 = Vec::with_capacity(len);
    let mut a21 = Vec::with_capacity(len);
    let mut a22_gap: f64 = 0.0;
    let mut a21_gap: f64 = 0.0;
    for j in 0..len {
        let (p1, q1) = (&ah1_plus.values[j], &ah1_minus.values[j]);
        let (p2, q2) = (&ah2_plus.values[j], &ah2_minus.values[j]);
        let b12 = &dinv * (p2 - p1);
        let b11 = &dinv * (q1 * m1 - q2 * m2);
        let b22 = p1 + m1 * &b12;
        let b21 = m1 * &b11 - q1 * m1;
        let b22_alt = p2 + m2 * &b12;
        let b21_alt = m2 * &b11 - q2 * m2;
        a22_gap = a22_gap.max(max_abs(&(&b22 - &b22_alt)));
        a21_gap = a21_gap.max(max_abs(&(&b21 - &b21_alt)));
        a12.push(b12);
        a11.push(b11);
        a22.push(b22);
        a21.push(b21);
    }
    let grid = ah1_plus.grid;
    let tag_m = ah1_minus.analyticity;
    let tag_p = ah1_plus.analyticity;
    let blocks = BlockTransforms {
        a11_minus: LineMatrixFunction::new(grid, a11, tag_m)?,
        a21_minus: LineMatrixFunction::new(grid, a21, tag_m)?,
        a12_plus: LineMatrixFunction::new(grid, a12, tag_p)?,
        a22_plus: LineMatrixFunction::new(grid, a22, tag_p)?,
    };
    let blocks_max = [&blocks.a11_minus, &blocks.a21_minus, &blocks.a12_plus, &blocks.a22_plus]
        .iter()
        .map(|f| f.max_abs())
        .fold(0.0, f64::max);
    let structure_defect = structure_defect(&blocks);
    let report = BlockRecovery { blocks_max, a22_form_gap: a22_gap, a21_form_gap: a21_gap, structure_defect };
    if structure_defect > consistency_tol * blocks_max.max(1.0) {
        return Err(IspError::InconsistentInputs {
            detail: format!(
                "recovered blocks carry {structure_defect:e} in structurally zero positions; the two factorizations do not share one potential"
            ),
        });
    }
    Ok((blocks, report))
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry in positions that the kernel structure keeps zero.
pub fn structure_defect(blocks: &BlockTransforms) -> f64 {
    use crate::domain::Block;
    let n = blocks.n();
    let pairs = [
        (Block::B11, &blocks.a11_minus),
        (Block::B12, &blocks.a12_plus),
        (Block::B21, &blocks.a21_minus),
        (Block::B22, &blocks.a22_plus),
    ];
    let mut worst: f64 = 0.0;
    for (b, f) in pairs {
        for k in 0..n {
            for j in 0..n {
                if !b.kernel_allows(n, k + 1, j + 1) {
                    worst = worst.max(f.values.iter().map(|v| v[(k, j)].norm()).fold(0.0, f64::max));
                }
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolvabilityReport {
    pub min_det: f64,
    pub argmin_det: f64,
    pub nonsingular: bool,
    /// Hermitian part `(S + S*)/2` definite (one sign) at every node.
    pub re_definite: bool,
    /// `(S - S*)/(2i)` definite at every node.
    pub im_definite: bool,
    /// `max |S(lambda) - I|` at the two grid ends.
    pub edge_residual: f64,
    pub winding_number: i64,
}

fn definite_everywhere(mats: impl Iterator<Item = CMatrix>) -> bool {
    let mut sign = 0i8;
    for m in mats {
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
        let s = if lo > 0.0 {
            1
        } else if hi < 0.0 {
            -1
        } else {
            return false;
        };
        if sign == 0 {
            sign = s;
        } else if sign != s {
            return false;
        }
    }
    true
}

pub fn solvability_report(s: &LineMatrixFunction, singularity_tol: f64) -> SolvabilityReport {
    let pts = s.grid.points();
    let (min_det, argmin_det) = s
        .values
        .iter()
        .zip(&pts)
        .map(|(v, &l)| (v.determinant().norm(), l))
        .fold((f64::INFINITY, f64::NAN), |acc, x| if x.0 < acc.0 { x } else { acc });
    let half = C64::new(0.5, 0.0);
    let re = s.values.iter().map(|v| (v + v.adjoint()) * half);
    let re_definite = definite_everywhere(re);
    let im = s.values.iter().map(|v| (v - v.adjoint()) * C64::new(0.0, -0.5));
    let im_definite = definite_everywhere(im);
    let id = CMatrix::identity(s.dim, s.dim);
    let last = s.values.len() - 1;
    let edge_residual = [0, last].iter().map(|&j| max_abs(&(&s.values[j] - &id))).fold(0.0, f64::max);
    SolvabilityReport {
        min_det,
        argmin_det,
        nonsingular: min_det > singularity_tol,
        re_definite,
        im_definite,
        edge_residual,
        winding_number: winding_number(s),
    }
}

/// `S = (I + a_plus)^{-1} (I + a_minus)` sampled on `grid`.
pub fn compose_scattering(a_plus: &RationalMatrix, a_minus: &RationalMatrix, grid: LambdaGrid) -> Result<LineMatrixFunction> {
    let dim = a_plus.dim;
    let id = CMatrix::identity(dim, dim);
    let mut values = Vec::with_capacity(grid.len());
    for l in grid.points() {
        let z = C64::new(l, 0.0);
        let left = &id + a_plus.eval(z);
        let det_abs = left.determinant().norm();
        let inv = left.try_inverse().ok_or(IspError::SingularFactor { lambda: l, det_abs })?;
        values.push(inv * (&id + a_minus.eval(z)));
    }
    let delta = a_plus.strip_width().min(a_minus.strip_width());
    LineMatrixFunction::new(grid, values, Analyticity::Strip(if delta.is_finite() { delta } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{PoleTerm, Rational};
    use rand::{Rng, SeedableRng};

    const I: C64 = C64 { re: 0.0, im: 1.0 };

    fn grid() -> LambdaGrid {
        LambdaGrid::new(100.0, 4096).unwrap()
    }

    #[test]
    fn identity_gives_zero_factors() {
        let s = LineMatrixFunction::identity(grid(), 2);
        let sol = solve_regular_rh(&s).unwrap();
        assert_eq!(sol.ah_plus.max_abs(), 0.0);
        assert_eq!(sol.ah_minus.max_abs(), 0.0);
    }

    #[test]
    fn n1_scalar_factorization() {
        let g = grid();
        let s = LineMatrixFunction::scalar(g, Analyticity::Strip(0.5), |l| (1.0 - 2.0 * I * l) / (1.0 - 2.0 * I * l - I));
        let sol = solve_regular_rh(&s).unwrap();
        assert_eq!(sol.method, RhMethod::Gmres);
        let err = sol.ah_plus.max_distance_to(|l| CMatrix::from_element(1, 1, -I / (1.0 - 2.0 * I * l)));
        assert!(err < 1e-6, "{err}");
        assert!(sol.ah_minus.max_abs() < 1e-6);
        assert!(sol.factorization_residual < 1e-6);
    }

    #[test]
    fn nonzero_index_is_fredholm_singular() {
        let g = LambdaGrid::new(50.0, 256).unwrap();
        // (l + i)/(l - i) admits the homogeneous solution 1/(l + i)
        let s = LineMatrixFunction::scalar(g, Analyticity::None, |l| (l + I) / (l - I));
        assert_eq!(solve_regular_rh(&s).unwrap_err().name(), "FredholmSingular");
    }

    #[test]
    fn dense_path_agrees_with_iterative_path() {
        let g = LambdaGrid::new(40.0, 256).unwrap();
        let s = LineMatrixFunction::scalar(g, Analyticity::None, |l| (1.0 - 2.0 * I * l) / (1.0 - 2.0 * I * l - I));
        let proj = CauchyProjector::new(g);
        let dense = solve_regular_rh_with(&s, &proj, &RhOptions::default()).unwrap();
        let iter = solve_regular_rh_with(&s, &proj, &RhOptions { dense_limit: 0, ..Default::default() }).unwrap();
        assert_eq!(dense.method, RhMethod::Dense);
        assert!(dense.ah_plus.max_distance(&iter.ah_plus) < 1e-9);
    }

    fn random_factor(rng: &mut impl Rng, dim: usize, upper: bool, norm: f64) -> RationalMatrix {
        let mut m = RationalMatrix::zero(dim);
        for r in 0..dim {
            for c in 0..dim {
                let im = rng.random_range(0.5..2.0);
                let pole = C64::new(rng.random_range(-3.0..3.0), if upper { im } else { -im });
                // |coeff / (l - pole)| <= |coeff| / im on the real axis
                let scale = norm * im / dim as f64;
                let coeff = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (scale / 2f64.sqrt());
                m.set(r, c, Rational::new(vec![PoleTerm::simple(coeff, pole)]));
            }
        }
        m
    }

    #[test]
    fn synthetic_matrix_factorization_roundtrip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let g = grid();
        for dim in [1, 2] {
            let ap = random_factor(&mut rng, dim, false, 0.2);
            let am = random_factor(&mut rng, dim, true, 0.2);
            let s = compose_scattering(&ap, &am, g).unwrap();
            let sol = solve_regular_rh(&s).unwrap();
            let ea = sol.ah_plus.max_distance(&ap.to_line(g, Analyticity::None));
            let eb = sol.ah_minus.max_distance(&am.to_line(g, Analyticity::None));
            assert!(ea < 1e-6 && eb < 1e-6, "dim {dim}: {ea} {eb}");
            assert!(sol.factorization_residual < 1e-6);
        }
    }

    #[test]
    fn solvability_of_identity_and_n1() {
        let g = grid();
        let r = solvability_report(&LineMatrixFunction::identity(g, 2), 1e-10);
        assert!(r.re_definite && r.nonsingular && r.edge_residual == 0.0);
        let s = LineMatrixFunction::scalar(g, Analyticity::None, |l| (1.0 - 2.0 * I * l) / (1.0 - 2.0 * I * l - I));
        let r = solvability_report(&s, 1e-10);
        // |S| = |1 - 2il| / |1 - i - 2il| is smallest at l = 0 ... among nodes near the minimum of the inverse
        let direct = g.points().iter().map(|&l| ((1.0 - 2.0 * I * l) / (1.0 - 2.0 * I * l - I)).norm()).fold(f64::INFINITY, f64::min);
        assert!((r.min_det - direct).abs() < 1e-15);
        assert!(r.min_det <= 1.0 / 2f64.sqrt() + 1e-12);
        assert_eq!(r.winding_number, 0);
    }

    #[test]
    fn singular_point_is_flagged() {
        let g = LambdaGrid::new(10.0, 64).unwrap();
        let s = LineMatrixFunction::from_fn(g, 2, Analyticity::None, |l| {
            let mut m = CMatrix::identity(2, 2);
            m[(0, 0)] = C64::new(l, 0.0);
            m
        });
        let r = solvability_report(&s, 1e-10);
        assert!(!r.nonsingular);
        assert_eq!(r.argmin_det, 0.0);
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let g = LambdaGrid::new(10.0, 16).unwrap();
        let z = LineMatrixFunction::zeros(g, 1, Analyticity::None);
        let h = BoundaryMatrix::scalar(C64::new(2.0, 0.0)).unwrap();
        let err = recover_blocks(&z, &z, &z, &z, &h, &h, 1e-10, 1e-6).unwrap_err();
        assert_eq!(err.name(), "DegenerateBoundaryPair");
    }

    #[test]
    fn zero_factorizations_give_zero_blocks() {
        let g = LambdaGrid::new(10.0, 16).unwrap();
        let z = LineMatrixFunction::zeros(g, 2, Analyticity::None);
        let h1 = BoundaryMatrix::identity(2);
        let h2 = BoundaryMatrix::new(CMatrix::from_diagonal_element(2, 2, C64::new(2.0, 0.0))).unwrap();
        let (b, rep) = recover_blocks(&z, &z, &z, &z, &h1, &h2, 1e-10, 1e-6).unwrap();
        assert_eq!(b.a12_plus.max_abs(), 0.0);
        assert_eq!(rep.a22_form_gap, 0.0);
    }
}

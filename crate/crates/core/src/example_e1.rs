//! The explicitly solvable class where every middle component couples only
//! to the first and the last component:
//!
//! ```text
//! -i z_k' + c_{k,1}(x) z_1 + c_{k,2n}(x) z_{2n} = lambda xi_k z_k,   k = 2..2n-1,
//! ```
//!
//! with `z_1`, `z_{2n}` free. The displayed solution formulas correspond to
//! the potential `Q = -c` in `-i y' + Q y = lambda sigma y`, which is what
//! [`E1System::to_potential`] builds.
//!
//! With the boundary condition `z_{2n}(0) = z_1(0)`, `z_{n+k}(0) = sum_j h_{kj} z_j(0)`,
//! the scattering matrix is the identity plus a single column, and each
//! entry of that column splits into a minus part (`int c_- e^{-i lambda s}`) and a
//! plus part (`int c_+ e^{i lambda s}`). Two boundary matrices with
//! `det(H1 - H1~) != 0` determine all coefficients pointwise in `s`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Block, BoundaryMatrix, Dispersion, Envelope, MCanonicalPotential, ScalarProfile, SINGULARITY_TOL};
use crate::error::{IspError, Result};
use crate::line::{Analyticity, LambdaGrid, LineMatrixFunction};
use crate::spectral::{inverse_half_line_transform, CauchyProjector, Side};
use crate::{CMatrix, C64, I};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct E1System {
    pub disp: Dispersion,
    /// `c_{k,1}` for `k = 2..2n-1` (index `k - 2`).
    pub c_first: Vec<ScalarProfile>,
    /// `c_{k,2n}` for `k = 2..2n-1` (index `k - 2`).
    pub c_last: Vec<ScalarProfile>,
    pub envelope: Envelope,
}

impl E1System {
    pub fn new(disp: Dispersion, c_first: Vec<ScalarProfile>, c_last: Vec<ScalarProfile>, envelope: Envelope) -> Result<Self> {
        let n = disp.n();
        if n < 2 {
            return Err(IspError::InvalidDispersion("the coupling class needs n >= 2".into()));
        }
        if c_first.len() != 2 * n - 2 || c_last.len() != 2 * n - 2 {
            return Err(IspError::DimensionMismatch(format!(
                "expected {} profiles per family, got {} and {}",
                2 * n - 2,
                c_first.len(),
                c_last.len()
            )));
        }
        let sys = Self { disp, c_first, c_last, envelope };
        sys.to_potential().ensure_valid()?;
        Ok(sys)
    }

    /// All couplings zero.
    pub fn zero(disp: Dispersion, envelope: Envelope) -> Result<Self> {
        let m = 2 * disp.n().max(1) - 2;
        Self::new(disp, vec![ScalarProfile::zero(); m], vec![ScalarProfile::zero(); m], envelope)
    }

    pub fn n(&self) -> usize {
        self.disp.n()
    }

    /// `c_{k,1}`, one-based `k`.
    pub fn first(&self, k: usize) -> &ScalarProfile {
        &self.c_first[k - 2]
    }

    /// `c_{k,2n}`, one-based `k`.
    pub fn last(&self, k: usize) -> &ScalarProfile {
        &self.c_last[k - 2]
    }

    /// One-based `xi_k`.
    fn xi(&self, k: usize) -> f64 {
        self.disp.xi()[k - 1]
    }

    /// Embedding as a general potential with `Q_{k,1} = -c_{k,1}`, `Q_{k,2n} = -c_{k,2n}`.
    pub fn to_potential(&self) -> MCanonicalPotential {
        let n = self.n();
        let mut pot = MCanonicalPotential::zero(n, self.envelope);
        let minus = C64::new(-1.0, 0.0);
        for k in 2..2 * n {
            let (b, kk, jj) = Block::locate(n, k - 1, 0);
            pot.set(b, kk, jj, self.first(k).scale(minus));
            let (b, kk, jj) = Block::locate(n, k - 1, 2 * n - 1);
            pot.set(b, kk, jj, self.last(k).scale(minus));
        }
        pot
    }

    /// Decay rate of the split densities `c_{k+-}(s)`.
    pub fn density_rate(&self) -> f64 {
        self.envelope.eps / (self.disp.xi_last() - self.disp.xi_first())
    }
}

/// The `(n-1) x (n-1)` block `[h_{kj}]`, `k = 1..n-1`, `j = 2..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct E1Boundary {
    h1: CMatrix,
}

impl E1Boundary {
    pub fn new(h1: CMatrix) -> Result<Self> {
        Self::with_tolerance(h1, SINGULARITY_TOL)
    }

    pub fn with_tolerance(h1: CMatrix, tol: f64) -> Result<Self> {
        if h1.nrows() != h1.ncols() || h1.nrows() == 0 {
            return Err(IspError::DimensionMismatch("the boundary block must be square and nonempty".into()));
        }
        let det_abs = h1.determinant().norm();
        if !(det_abs > tol) {
            return Err(IspError::SingularH { det_abs });
        }
        Ok(Self { h1 })
    }

    pub fn scalar(h: C64) -> Result<Self> {
        Self::new(CMatrix::from_element(1, 1, h))
    }

    pub fn block(&self) -> &CMatrix {
        &self.h1
    }

    /// `h_{kj}` with one-based `k in 1..n-1`, `j in 2..n`.
    pub fn h(&self, k: usize, j: usize) -> C64 {
        self.h1[(k - 1, j - 2)]
    }

    pub fn n(&self) -> usize {
        self.h1.nrows() + 1
    }

    /// The full `n x n` matrix: rows `(0, h_{k2}, .., h_{kn})`, last row `(1, 0, .., 0)`.
    pub fn to_full(&self) -> Result<BoundaryMatrix> {
        let n = self.n();
        let mut h = CMatrix::zeros(n, n);
        h.view_mut((0, 1), (n - 1, n - 1)).copy_from(&self.h1);
        h[(n - 1, 0)] = C64::new(1.0, 0.0);
        BoundaryMatrix::new(h)
    }
}

/// Uniform samples `s_m = m ds`, `m = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SGrid {
    pub ds: f64,
    pub len: usize,
}

impl SGrid {
    pub fn new(s_max: f64, len: usize) -> Result<Self> {
        if !(s_max > 0.0) || len < 2 {
            return Err(IspError::InvalidGrid("s grid needs s_max > 0 and at least 2 points".into()));
        }
        Ok(Self { ds: s_max / (len - 1) as f64, len })
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|m| m as f64 * self.ds).collect()
    }

    pub fn s_max(&self) -> f64 {
        self.ds * (self.len - 1) as f64
    }
}

/// Split densities `c_{k-}(s)`, `c_{k+}(s)` for `k = 1..n-1` (index `k - 1`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct E1Profiles {
    pub s_grid: SGrid,
    pub c_minus: Vec<Vec<C64>>,
    pub c_plus: Vec<Vec<C64>>,
}

impl E1Profiles {
    /// Densities computed directly from the couplings.
    pub fn from_system(sys: &E1System, bnd: &E1Boundary, s_grid: SGrid) -> Self {
        let n = sys.n();
        let s = s_grid.points();
        let x1 = sys.xi(1);
        let x2n = sys.xi(2 * n);
        let term = |p: &ScalarProfile, d: f64, s: f64| p.eval(s / d) / d;
        let mut c_minus = Vec::with_capacity(n - 1);
        let mut c_plus = Vec::with_capacity(n - 1);
        for k in 1..n {
            let m = n + k;
            let minus = s
                .iter()
                .map(|&s| {
                    let mut v = term(sys.first(m), sys.xi(m) - x1, s);
                    for j in 2..=n {
                        v -= bnd.h(k, j) * term(sys.first(j), sys.xi(j) - x1, s);
                    }
                    I * v
                })
                .collect();
            let plus = s
                .iter()
                .map(|&s| {
                    let mut v = term(sys.last(m), x2n - sys.xi(m), s);
                    for j in 2..=n {
                        v -= bnd.h(k, j) * term(sys.last(j), x2n - sys.xi(j), s);
                    }
                    I * v
                })
                .collect();
            c_minus.push(minus);
            c_plus.push(plus);
        }
        Self { s_grid, c_minus, c_plus }
    }

    /// Smallest `M` with `|c(s)| <= M e^{-rate s}` on the grid.
    pub fn envelope_constant(&self, rate: f64) -> f64 {
        let s = self.s_grid.points();
        self.c_minus
            .iter()
            .chain(&self.c_plus)
            .flat_map(|v| v.iter().zip(&s).map(|(c, &s)| c.norm() * (rate * s).exp()))
            .fold(0.0, f64::max)
    }
}

/// `S_H` for the coupling class, from exact half-line transforms of the profiles.
pub fn e1_scattering(sys: &E1System, bnd: &E1Boundary, grid: LambdaGrid) -> Result<LineMatrixFunction> {
    let n = sys.n();
    if bnd.n() != n {
        return Err(IspError::DimensionMismatch("boundary block does not match the system size".into()));
    }
    let x1 = sys.xi(1);
    let x2n = sys.xi(2 * n);
    let column = |lambda: f64| -> Vec<C64> {
        // int_0^inf (c_{m,1} e^{i l (xi_1 - xi_m) t} + c_{m,2n} e^{i l (xi_2n - xi_m) t}) dt
        let both = |m: usize| {
            sys.first(m).laplace(C64::new(lambda * (x1 - sys.xi(m)), 0.0))
                + sys.last(m).laplace(C64::new(lambda * (x2n - sys.xi(m)), 0.0))
        };
        (1..n)
            .map(|k| {
                let mut v = both(n + k);
                for j in 2..=n {
                    v -= bnd.h(k, j) * both(j);
                }
                I * v
            })
            .collect()
    };
    let values: Vec<CMatrix> = grid
        .points()
        .par_iter()
        .map(|&l| {
            let mut m = CMatrix::identity(n, n);
            for (k, v) in column(l).into_iter().enumerate() {
                m[(k, n - 1)] += v;
            }
            m
        })
        .collect();
    LineMatrixFunction::new(grid, values, Analyticity::Strip(sys.density_rate()))
}

/// Solution samples `z_1..z_2n` (outer index) on `x_grid` with amplitudes
/// `a = (a_1..a_n)`, `b = (b_{n+1}..b_{2n})` at infinity.
pub fn e1_explicit_solution(sys: &E1System, lambda: f64, a: &[C64], b: &[C64], x_grid: &[f64]) -> Result<Vec<Vec<C64>>> {
    let n = sys.n();
    if a.len() != n || b.len() != n {
        return Err(IspError::DimensionMismatch(format!("expected {n} amplitudes per side")));
    }
    let x1 = sys.xi(1);
    let x2n = sys.xi(2 * n);
    let amp = |k: usize| if k <= n { a[k - 1] } else { b[k - n - 1] };
    let (a1, b2n) = (a[0], b[n - 1]);
    Ok((1..=2 * n)
        .map(|k| {
            x_grid
                .iter()
                .map(|&x| {
                    let free = (I * lambda * sys.xi(k) * x).exp();
                    if k == 1 || k == 2 * n {
                        return amp(k) * free;
                    }
                    let w1 = C64::new(lambda * (x1 - sys.xi(k)), 0.0);
                    let w2 = C64::new(lambda * (x2n - sys.xi(k)), 0.0);
                    let coupled = a1 * sys.first(k).laplace_from(x, w1) + b2n * sys.last(k).laplace_from(x, w2);
                    (amp(k) - I * coupled) * free
                })
                .collect()
        })
        .collect())
}

/// Plus and minus parts of one column entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EntrySplit {
    pub plus: Vec<C64>,
    pub minus: Vec<C64>,
}

/// Splits `S_{k,n}`, `k = 1..n-1`.
pub fn e1_split(s_h: &LineMatrixFunction) -> Result<Vec<EntrySplit>> {
    e1_split_with(s_h, &CauchyProjector::new(s_h.grid))
}

pub fn e1_split_with(s_h: &LineMatrixFunction, proj: &CauchyProjector) -> Result<Vec<EntrySplit>> {
    let n = s_h.dim;
    (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let e = s_h.entry_samples(k, n - 1);
            let (plus, minus) = proj.split_samples(&e)?;
            Ok(EntrySplit { plus, minus })
        })
        .collect()
}

/// Densities `c_{k+-}(s)` from the split parts of the column.
pub fn e1_invert_transforms(splits: &[EntrySplit], grid: &LambdaGrid, s_grid: SGrid) -> E1Profiles {
    let s = s_grid.points();
    let (c_plus, c_minus) = splits
        .par_iter()
        .map(|sp| {
            (
                inverse_half_line_transform(grid, Side::Plus, &sp.plus, &s),
                inverse_half_line_transform(grid, Side::Minus, &sp.minus, &s),
            )
        })
        .unzip();
    E1Profiles { s_grid, c_minus, c_plus }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `c_{k,1}`.
    First,
    /// `c_{k,2n}`.
    Last,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::First => "first",
            Family::Last => "last",
        }
    }
}

/// A recovered coupling on its native argument `x = s / d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveredProfile {
    /// One-based component index `k in 2..2n-1`.
    pub k: usize,
    pub family: Family,
    /// Scale `d` with `x = s / d`.
    pub scale: f64,
    pub x: Vec<f64>,
    pub values: Vec<C64>,
}

impl RecoveredProfile {
    /// As a sampled profile (linear interpolation, decaying tail).
    pub fn to_profile(&self, tail_rate: f64) -> Result<ScalarProfile> {
        ScalarProfile::sampled(self.x[1] - self.x[0], self.values.clone(), tail_rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemDiagnostics {
    pub unknowns: usize,
    pub equations: usize,
    /// Per-s smallest singular value of the minus and plus systems.
    pub min_singular_minus: Vec<f64>,
    pub min_singular_plus: Vec<f64>,
    /// Per-s numerical rank of the minus and plus systems.
    pub rank_minus: Vec<usize>,
    pub rank_plus: Vec<usize>,
}

impl SystemDiagnostics {
    pub fn min_singular(&self) -> f64 {
        self.min_singular_minus.iter().chain(&self.min_singular_plus).copied().fold(f64::INFINITY, f64::min)
    }

    /// Fraction of s points at which either system is rank deficient.
    pub fn deficient_fraction(&self) -> f64 {
        let full = self.unknowns;
        let bad = self
            .rank_minus
            .iter()
            .zip(&self.rank_plus)
            .filter(|(a, b)| **a < full || **b < full)
            .count();
        bad as f64 / self.rank_minus.len().max(1) as f64
    }

    pub fn max_nullity(&self) -> usize {
        self.rank_minus.iter().chain(&self.rank_plus).map(|r| self.unknowns - r).max().unwrap_or(0)
    }
}

/// Per-s coefficient matrix; columns are the unknowns for `m = 2..2n-1`.
fn system_matrix(bnds: &[&E1Boundary], n: usize) -> CMatrix {
    let rows = bnds.len() * (n - 1);
    let mut a = CMatrix::zeros(rows, 2 * n - 2);
    for (b_idx, bnd) in bnds.iter().enumerate() {
        for k in 1..n {
            let r = b_idx * (n - 1) + k - 1;
            a[(r, n + k - 2)] = C64::new(1.0, 0.0);
            for j in 2..=n {
                a[(r, j - 2)] = -bnd.h(k, j);
            }
        }
    }
    a
}

struct PointSolve {
    x: Option<DVector<C64>>,
    rank: usize,
    min_sv: f64,
}

fn solve_point(a: &CMatrix, rhs: DVector<C64>) -> PointSolve {
    let cols = a.ncols();
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&v| v > RANK_CUTOFF * smax).count();
    // missing singular values of a wide system are zero
    let min_sv = if sv.len() < cols { 0.0 } else { sv.iter().copied().fold(f64::INFINITY, f64::min) };
    let x = if rank == cols { svd.solve(&rhs, RANK_CUTOFF * smax).ok() } else { None };
    PointSolve { x, rank, min_sv }
}

/// Per-s rank diagnostics without solving.
pub fn e1_system_diagnostics(bnds: &[&E1Boundary], s_grid: SGrid) -> Result<SystemDiagnostics> {
    let n = bnds.first().ok_or_else(|| IspError::DimensionMismatch("no boundary given".into()))?.n();
    let a = system_matrix(bnds, n);
    let zero = DVector::zeros(a.nrows());
    let per: Vec<PointSolve> = (0..s_grid.len).into_par_iter().map(|_| solve_point(&a, zero.clone())).collect();
    Ok(SystemDiagnostics {
        unknowns: a.ncols(),
        equations: a.nrows(),
        min_singular_minus: per.iter().map(|p| p.min_sv).collect(),
        min_singular_plus: per.iter().map(|p| p.min_sv).collect(),
        rank_minus: per.iter().map(|p| p.rank).collect(),
        rank_plus: per.iter().map(|p| p.rank).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct E1Recovery {
    /// `c_{k,1}` for `k = 2..2n-1`.
    pub c_first: Vec<RecoveredProfile>,
    /// `c_{k,2n}` for `k = 2..2n-1`.
    pub c_last: Vec<RecoveredProfile>,
    pub diagnostics: SystemDiagnostics,
}

/// Solves the stacked per-s systems from one or more boundaries.
///
/// Fails with [`IspError::RankDeficient`] at the first `s` where either
/// system has a null space; [`e1_system_diagnostics`] reports all points.
pub fn e1_solve_coefficients(profiles: &[&E1Profiles], bnds: &[&E1Boundary], disp: &Dispersion) -> Result<E1Recovery> {
    if profiles.len() != bnds.len() || profiles.is_empty() {
        return Err(IspError::DimensionMismatch("need one profile set per boundary".into()));
    }
    let n = disp.n();
    let s_grid = profiles[0].s_grid;
    if profiles.iter().any(|p| p.s_grid != s_grid || p.c_minus.len() != n - 1 || p.c_plus.len() != n - 1) {
        return Err(IspError::DimensionMismatch("profile sets must share one s grid and have n - 1 entries".into()));
    }
    if bnds.iter().any(|b| b.n() != n) {
        return Err(IspError::DimensionMismatch("boundary block does not match the dispersion".into()));
    }
    let a = system_matrix(bnds, n);
    let s = s_grid.points();
    let rhs = |fam: Family, m: usize| -> DVector<C64> {
        DVector::from_iterator(
            a.nrows(),
            profiles.iter().flat_map(|p| {
                let src = match fam {
                    Family::First => &p.c_minus,
                    Family::Last => &p.c_plus,
                };
                src.iter().map(move |v| -I * v[m])
            }),
        )
    };
    let solved: Vec<(PointSolve, PointSolve)> = (0..s_grid.len)
        .into_par_iter()
        .map(|m| (solve_point(&a, rhs(Family::First, m)), solve_point(&a, rhs(Family::Last, m))))
        .collect();
    let diagnostics = SystemDiagnostics {
        unknowns: a.ncols(),
        equations: a.nrows(),
        min_singular_minus: solved.iter().map(|p| p.0.min_sv).collect(),
        min_singular_plus: solved.iter().map(|p| p.1.min_sv).collect(),
        rank_minus: solved.iter().map(|p| p.0.rank).collect(),
        rank_plus: solved.iter().map(|p| p.1.rank).collect(),
    };
    if let Some((m, (p, q))) = solved.iter().enumerate().find(|(_, (p, q))| p.x.is_none() || q.x.is_none()) {
        return Err(IspError::RankDeficient { nullity: a.ncols() - p.rank.min(q.rank), s: s[m] });
    }
    let xi = disp.xi();
    let (x1, x2n) = (xi[0], xi[2 * n - 1]);
    let build = |fam: Family| -> Vec<RecoveredProfile> {
        (2..2 * n)
            .map(|k| {
                let d = match fam {
                    Family::First => xi[k - 1] - x1,
                    Family::Last => x2n - xi[k - 1],
                };
                let values = solved
                    .iter()
                    .map(|(p, q)| {
                        let x = match fam {
                            Family::First => p.x.as_ref(),
                            Family::Last => q.x.as_ref(),
                        };
                        // unknown is c(s / d) / d
                        x.unwrap()[k - 2] * d
                    })
                    .collect();
                RecoveredProfile { k, family: fam, scale: d, x: s.iter().map(|s| s / d).collect(), values }
            })
            .collect()
    };
    Ok(E1Recovery { c_first: build(Family::First), c_last: build(Family::Last), diagnostics })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileError {
    pub k: usize,
    pub family: Family,
    /// `max |recovered - true| / max |true|`, or the absolute error for a zero profile.
    pub error: f64,
    pub relative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct E1Report {
    pub profiles: Vec<ProfileError>,
    pub max_rel_error: f64,
    pub min_singular: f64,
    /// `max |S_H - I|` for each of the two boundaries.
    pub column_sup: [f64; 2],
}

/// Error of recovered profiles against the true couplings, sampled at the
/// recovery points.
pub fn profile_errors(sys: &E1System, rec: &E1Recovery) -> Vec<ProfileError> {
    rec.c_first
        .iter()
        .map(|p| (p, sys.first(p.k)))
        .chain(rec.c_last.iter().map(|p| (p, sys.last(p.k))))
        .map(|(p, truth)| {
            let want: Vec<C64> = p.x.iter().map(|&x| truth.eval(x)).collect();
            let err = p.values.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let scale = want.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let relative = scale > 0.0;
            ProfileError { k: p.k, family: p.family, error: if relative { err / scale } else { err }, relative }
        })
        .collect()
}

/// Forward scattering for both boundaries, split, inversion, per-s solve.
pub fn e1_roundtrip(
    sys: &E1System,
    bnd: &E1Boundary,
    bnd_tilde: &E1Boundary,
    grid: LambdaGrid,
    s_grid: SGrid,
) -> Result<(E1Recovery, E1Report)> {
    let proj = CauchyProjector::new(grid);
    let mut profiles = Vec::with_capacity(2);
    let mut column_sup = [0.0; 2];
    for (i, b) in [bnd, bnd_tilde].into_iter().enumerate() {
        let s_h = e1_scattering(sys, b, grid)?;
        column_sup[i] = s_h.sub(&LineMatrixFunction::identity(grid, sys.n()))?.max_abs();
        let splits = e1_split_with(&s_h, &proj)?;
        profiles.push(e1_invert_transforms(&splits, &grid, s_grid));
    }
    let rec = e1_solve_coefficients(&[&profiles[0], &profiles[1]], &[bnd, bnd_tilde], &sys.disp)?;
    let errors = profile_errors(sys, &rec);
    let max_rel_error = errors.iter().map(|e| e.error).fold(0.0, f64::max);
    let report = E1Report { max_rel_error, min_singular: rec.diagnostics.min_singular(), profiles: errors, column_sup };
    Ok((rec, report))
}

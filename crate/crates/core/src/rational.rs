//! Proper rational functions in partial-fraction form, with the exact
//! half-plane split and the scalar zero/pole factorization.

use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::line::{Analyticity, LambdaGrid, LineMatrixFunction};
use crate::{CMatrix, C64};

/// `coeff / (lambda - pole)^order`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleTerm {
    pub coeff: C64,
    pub pole: C64,
    pub order: u32,
}

impl PoleTerm {
    pub fn simple(coeff: C64, pole: C64) -> Self {
        Self { coeff, pole, order: 1 }
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        self.coeff / (lambda - self.pole).powu(self.order)
    }
}

/// A sum of pole terms; vanishes at infinity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub terms: Vec<PoleTerm>,
}

impl Rational {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<PoleTerm>) -> Self {
        Self { terms }
    }

    /// `int_0^inf gamma e^{-a t} e^{i lambda xi t} dt = gamma / (a - i lambda xi)`.
    pub fn half_line_transform(gamma: C64, a: f64, xi: f64) -> Self {
        // gamma / (a - i xi lambda) = (i gamma / xi) / (lambda + i a / xi)
        let i = C64::new(0.0, 1.0);
        Self::new(vec![PoleTerm::simple(i * gamma / xi, -i * a / xi)])
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        self.terms.iter().map(|t| t.eval(lambda)).sum()
    }

    pub fn eval_real(&self, lambda: f64) -> C64 {
        self.eval(C64::new(lambda, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == C64::new(0.0, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            terms: self.terms.iter().map(|t| PoleTerm { coeff: t.coeff * s, ..*t }).collect(),
        }
    }

    /// Exact split into the part analytic in the upper half-plane (poles below
    /// the axis) and the part analytic in the lower half-plane.
    pub fn split(&self) -> Result<(Self, Self)> {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for t in &self.terms {
            if t.pole.im < 0.0 {
                plus.push(*t);
            } else if t.pole.im > 0.0 {
                minus.push(*t);
            } else {
                return Err(IspError::InvalidProfile(format!("pole {} lies on the real axis", t.pole)));
            }
        }
        Ok((Self::new(plus), Self::new(minus)))
    }

    /// Distance from the real axis to the nearest pole.
    pub fn strip_width(&self) -> f64 {
        self.terms.iter().map(|t| t.pole.im.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn sample(&self, grid: &LambdaGrid) -> Vec<C64> {
        grid.points().into_iter().map(|l| self.eval_real(l)).collect()
    }
}

/// Square matrix of rational entries, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalMatrix {
    pub dim: usize,
    pub entries: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zero(dim: usize) -> Self {
        Self { dim, entries: vec![Rational::zero(); dim * dim] }
    }

    pub fn get(&self, r: usize, c: usize) -> &Rational {
        &self.entries[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Rational) {
        self.entries[r * self.dim + c] = v;
    }

    pub fn eval(&self, lambda: C64) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |r, c| self.get(r, c).eval(lambda))
    }

    pub fn to_line(&self, grid: LambdaGrid, analyticity: Analyticity) -> LineMatrixFunction {
        LineMatrixFunction::from_fn(grid, self.dim, analyticity, |l| self.eval(C64::new(l, 0.0)))
    }

    pub fn split(&self) -> Result<(Self, Self)> {
        let mut plus = Self::zero(self.dim);
        let mut minus = Self::zero(self.dim);
        for (k, e) in self.entries.iter().enumerate() {
            let (p, m) = e.split()?;
            plus.entries[k] = p;
            minus.entries[k] = m;
        }
        Ok((plus, minus))
    }

    pub fn strip_width(&self) -> f64 {
        self.entries.iter().map(|e| e.strip_width()).fold(f64::INFINITY, f64::min)
    }
}

/// `prod (lambda - zeros_k) / prod (lambda - poles_k) - 1` in partial fractions
/// (simple, pairwise distinct poles; equal counts).
pub fn ratio_minus_one(zeros: &[C64], poles: &[C64]) -> Result<Rational> {
    if zeros.len() != poles.len() {
        return Err(IspError::DimensionMismatch("need as many zeros as poles".into()));
    }
    let mut terms = Vec::with_capacity(poles.len());
    for (j, &p) in poles.iter().enumerate() {
        let mut num = C64::new(1.0, 0.0);
        for &z in zeros {
            num *= p - z;
        }
        let mut den = C64::new(1.0, 0.0);
        for (k, &q) in poles.iter().enumerate() {
            if k != j {
                den *= p - q;
            }
        }
        if den.norm() < 1e-14 {
            return Err(IspError::InvalidProfile("poles must be distinct".into()));
        }
        terms.push(PoleTerm::simple(num / den, p));
    }
    Ok(Rational::new(terms))
}

/// Exact canonical factorization `(1 + a_plus) S = 1 + a_minus` of the scalar
/// `S = prod (lambda - zeros) / prod (lambda - poles)`.
///
/// Fails with [`IspError::FredholmSingular`] unless the counts of zeros and
/// poles in the lower half-plane agree (nonzero index).
pub fn scalar_factorization(zeros: &[C64], poles: &[C64]) -> Result<(Rational, Rational)> {
    let lower = |v: &[C64]| v.iter().copied().filter(|z| z.im < 0.0).collect::<Vec<_>>();
    let upper = |v: &[C64]| v.iter().copied().filter(|z| z.im > 0.0).collect::<Vec<_>>();
    if zeros.iter().chain(poles).any(|z| z.im == 0.0) {
        return Err(IspError::SingularScattering { lambda: f64::NAN, det_abs: 0.0 });
    }
    let (zl, pl) = (lower(zeros), lower(poles));
    if zl.len() != pl.len() {
        return Err(IspError::FredholmSingular {
            detail: format!(
                "index {}: {} zeros and {} poles below the axis",
                zl.len() as isize - pl.len() as isize,
                zl.len(),
                pl.len()
            ),
        });
    }
    // 1 + a_plus = prod (lambda - lower poles) / prod (lambda - lower zeros)
    let a_plus = ratio_minus_one(&pl, &zl)?;
    // 1 + a_minus = prod (lambda - upper zeros) / prod (lambda - upper poles)
    let a_minus = ratio_minus_one(&upper(zeros), &upper(poles))?;
    Ok((a_plus, a_minus))
}

//! Matrix functions sampled on a uniform real `lambda` grid.

use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::{CMatrix, C64};

/// Uniform periodic grid `lambda_j = -L + 2 L j / N`, `j = 0..N`.
///
/// The right end `+L` is identified with `-L`, so `lambda = 0` is the node `N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambda_max: f64,
    pub n: usize,
}

impl LambdaGrid {
    pub fn new(lambda_max: f64, n: usize) -> Result<Self> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(IspError::InvalidGrid(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(IspError::InvalidGrid(format!("need an even number of points >= 4, got {n}")));
        }
        Ok(Self { lambda_max, n })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.lambda_max / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.lambda_max + self.step() * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the grid node closest to `lambda`.
    pub fn nearest(&self, lambda: f64) -> usize {
        let j = ((lambda + self.lambda_max) / self.step()).round();
        j.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Half-plane (or strip) of analyticity, with half-width `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "delta", rename_all = "snake_case")]
pub enum Analyticity {
    /// Analytic in `Im lambda > -delta`.
    Plus(f64),
    /// Analytic in `Im lambda < delta`.
    Minus(f64),
    /// Analytic in `|Im lambda| < delta`.
    Strip(f64),
    None,
}

/// An `m x m` complex matrix per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMatrixFunction {
    pub grid: LambdaGrid,
    pub dim: usize,
    pub values: Vec<CMatrix>,
    pub analyticity: Analyticity,
}

impl LineMatrixFunction {
    pub fn new(grid: LambdaGrid, values: Vec<CMatrix>, analyticity: Analyticity) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(IspError::DimensionMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let dim = values.first().map_or(0, |v| v.nrows());
        if values.iter().any(|v| v.nrows() != dim || v.ncols() != dim) {
            return Err(IspError::DimensionMismatch("values must be square and of equal size".into()));
        }
        Ok(Self { grid, dim, values, analyticity })
    }

    pub fn from_fn(grid: LambdaGrid, dim: usize, analyticity: Analyticity, f: impl Fn(f64) -> CMatrix) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, dim, values, analyticity }
    }

    pub fn zeros(grid: LambdaGrid, dim: usize, analyticity: Analyticity) -> Self {
        Self::from_fn(grid, dim, analyticity, |_| CMatrix::zeros(dim, dim))
    }

    pub fn identity(grid: LambdaGrid, dim: usize) -> Self {
        Self::from_fn(grid, dim, Analyticity::None, |_| CMatrix::identity(dim, dim))
    }

    /// Scalar function as a `1 x 1` matrix function.
    pub fn scalar(grid: LambdaGrid, analyticity: Analyticity, f: impl Fn(f64) -> C64) -> Self {
        Self::from_fn(grid, 1, analyticity, |l| CMatrix::from_element(1, 1, f(l)))
    }

    /// Builds from per-entry sample vectors, `entries[r * dim + c]`.
    pub fn from_entries(grid: LambdaGrid, dim: usize, entries: &[Vec<C64>], analyticity: Analyticity) -> Self {
        let values = (0..grid.len())
            .map(|j| CMatrix::from_fn(dim, dim, |r, c| entries[r * dim + c][j]))
            .collect();
        Self { grid, dim, values, analyticity }
    }

    pub fn entry_samples(&self, r: usize, c: usize) -> Vec<C64> {
        self.values.iter().map(|v| v[(r, c)]).collect()
    }

    /// All entries in row-major order.
    pub fn entries(&self) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.push(self.entry_samples(r, c));
            }
        }
        out
    }

    pub fn with_analyticity(mut self, a: Analyticity) -> Self {
        self.analyticity = a;
        self
    }

    pub fn map(&self, analyticity: Analyticity, f: impl Fn(f64, &CMatrix) -> CMatrix) -> Self {
        let values = self
            .grid
            .points()
            .into_iter()
            .zip(&self.values)
            .map(|(l, v)| f(l, v))
            .collect::<Vec<CMatrix>>();
        let dim = values.first().map_or(self.dim, |v| v.nrows());
        Self { grid: self.grid, dim, values, analyticity }
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(IspError::DimensionMismatch("functions live on different grids".into()));
        }
        if self.dim != other.dim {
            return Err(IspError::DimensionMismatch(format!(
                "matrix sizes differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid, dim: self.dim, values, analyticity: common_tag(self.analyticity, other.analyticity) })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, dim: self.dim, values, analyticity: common_tag(self.analyticity, other.analyticity) })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| v * s).collect(),
            analyticity: self.analyticity,
        }
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest elementwise difference to `other`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Like [`max_distance`](Self::max_distance), restricted to `|lambda| <= window`.
    pub fn max_distance_within(&self, other: &Self, window: f64) -> f64 {
        self.grid
            .points()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .filter(|(l, _)| l.abs() <= window)
            .flat_map(|(_, (a, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Largest difference to a reference function of `lambda`.
    pub fn max_distance_to(&self, f: impl Fn(f64) -> CMatrix) -> f64 {
        self.grid
            .points()
            .into_iter()
            .zip(&self.values)
            .flat_map(|(l, v)| {
                let w = f(l);
                v.iter().zip(w.iter()).map(|(x, y)| (x - y).norm()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// Sub-block `rows x cols` starting at `(r0, c0)` of every sample.
    pub fn block(&self, r0: usize, c0: usize, size: usize) -> Self {
        Self {
            grid: self.grid,
            dim: size,
            values: self.values.iter().map(|v| v.view((r0, c0), (size, size)).into_owned()).collect(),
            analyticity: self.analyticity,
        }
    }
}

fn common_tag(a: Analyticity, b: Analyticity) -> Analyticity {
    use Analyticity::*;
    match (a, b) {
        (Plus(x), Plus(y)) => Plus(x.min(y)),
        (Minus(x), Minus(y)) => Minus(x.min(y)),
        (Strip(x), Strip(y)) | (Plus(x), Minus(y)) | (Minus(x), Plus(y)) => Strip(x.min(y)),
        (Strip(x), Plus(y) | Minus(y)) | (Plus(x) | Minus(x), Strip(y)) => Strip(x.min(y)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_zero_and_excludes_right_end() {
        let g = LambdaGrid::new(100.0, 4096).unwrap();
        assert_eq!(g.point(2048), 0.0);
        assert_eq!(g.point(0), -100.0);
        assert!((g.point(4095) - (100.0 - g.step())).abs() < 1e-12);
        assert_eq!(g.nearest(0.01), 2048);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(LambdaGrid::new(0.0, 16).is_err());
        assert!(LambdaGrid::new(1.0, 7).is_err());
    }

    #[test]
    fn entries_roundtrip() {
        let g = LambdaGrid::new(5.0, 8).unwrap();
        let f = LineMatrixFunction::from_fn(g, 2, Analyticity::None, |l| {
            CMatrix::from_fn(2, 2, |r, c| C64::new(l + r as f64, c as f64))
        });
        let back = LineMatrixFunction::from_entries(g, 2, &f.entries(), Analyticity::None);
        assert_eq!(back, f);
    }

    #[test]
    fn tags_combine() {
        assert_eq!(common_tag(Analyticity::Plus(1.0), Analyticity::Minus(0.5)), Analyticity::Strip(0.5));
        assert_eq!(common_tag(Analyticity::Plus(1.0), Analyticity::None), Analyticity::None);
    }
}

//! Determinant diagnostics of `I + A_H+-` on the real axis and on shifted lines.

use serde::Serialize;

use crate::line::{Analyticity, LineMatrixFunction};
use crate::spectral::{CauchyEvaluator, Side};
use crate::{CMatrix, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftedLine {
    pub delta: f64,
    /// `min |det(I + A_H+(lambda + i delta))|`.
    pub min_det_plus: f64,
    /// `min |det(I + A_H-(lambda - i delta))|`.
    pub min_det_minus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StripReport {
    pub min_det_plus: f64,
    pub argmin_plus: f64,
    pub min_det_minus: f64,
    pub argmin_minus: f64,
    /// `max |det(I + A_H+) - 1|` at the two grid ends.
    pub residual_plus: f64,
    pub residual_minus: f64,
    /// Declared strip half-width, when both inputs carry one.
    pub strip_estimate: Option<f64>,
    pub shifted: Vec<ShiftedLine>,
}

fn det_plus_identity(m: &CMatrix) -> C64 {
    (CMatrix::identity(m.nrows(), m.ncols()) + m).determinant()
}

fn min_with_arg(f: &LineMatrixFunction) -> (f64, f64) {
    f.grid
        .points()
        .into_iter()
        .zip(&f.values)
        .map(|(l, v)| (det_plus_identity(v).norm(), l))
        .fold((f64::INFINITY, f64::NAN), |acc, x| if x.0 < acc.0 { x } else { acc })
}

fn edge_residual(f: &LineMatrixFunction) -> f64 {
    let last = f.values.len() - 1;
    [0, last]
        .iter()
        .map(|&j| (det_plus_identity(&f.values[j]) - 1.0).norm())
        .fold(0.0, f64::max)
}

/// Minimum of `|det(I + F(z))|` over up to `samples` points `z = lambda +- i delta`.
fn shifted_min(f: &LineMatrixFunction, side: Side, delta: f64, samples: usize) -> f64 {
    let ev = CauchyEvaluator::new(f.grid, side);
    let entries = f.entries();
    let dim = f.dim;
    let stride = (f.grid.len() / samples.max(1)).max(1);
    let shift = match side {
        Side::Plus => C64::new(0.0, delta),
        Side::Minus => C64::new(0.0, -delta),
    };
    (0..f.grid.len())
        .step_by(stride)
        .map(|j| {
            let z = f.grid.point(j) + shift;
            let m = CMatrix::from_fn(dim, dim, |r, c| {
                let e = &entries[r * dim + c];
                if e.iter().all(|v| v.norm() == 0.0) {
                    C64::new(0.0, 0.0)
                } else {
                    ev.eval(e, z)
                }
            });
            det_plus_identity(&m).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Real-axis minima and edge residuals, plus minima on the lines
/// `Im lambda = +delta` (for `A_H+`) and `-delta` (for `A_H-`).
pub fn strip_diagnostics(ah_plus: &LineMatrixFunction, ah_minus: &LineMatrixFunction, deltas: &[f64]) -> StripReport {
    let (min_det_plus, argmin_plus) = min_with_arg(ah_plus);
    let (min_det_minus, argmin_minus) = min_with_arg(ah_minus);
    let width = |a: Analyticity| match a {
        Analyticity::Plus(d) | Analyticity::Minus(d) | Analyticity::Strip(d) => Some(d),
        Analyticity::None => None,
    };
    let strip_estimate = match (width(ah_plus.analyticity), width(ah_minus.analyticity)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        _ => None,
    };
    let shifted = deltas
        .iter()
        .map(|&delta| ShiftedLine {
            delta,
            min_det_plus: shifted_min(ah_plus, Side::Plus, delta, 256),
            min_det_minus: shifted_min(ah_minus, Side::Minus, delta, 256),
        })
        .collect();
    StripReport {
        min_det_plus,
        argmin_plus,
        min_det_minus,
        argmin_minus,
        residual_plus: edge_residual(ah_plus),
        residual_minus: edge_residual(ah_minus),
        strip_estimate,
        shifted,
    }
}

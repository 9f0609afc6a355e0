//! Direct scattering: bounded solutions, transformation-operator kernels,
//! half-line transforms, scattering and transmission matrices.

mod bounded;
mod diagnostics;
mod kernels;
mod transforms;

pub use bounded::{asymptotic_coefficients, reconstruct_from_kernels, solve_bounded_solution, solve_bounded_solution_with, BoundedSolution};
pub use diagnostics::{strip_diagnostics, ShiftedLine, StripReport};
pub use kernels::{potential_from_kernels, solve_to_kernels, solve_to_kernels_with, StoredRow, TOKernels};
pub use transforms::{
    assemble_ah, assemble_ah_at, kernel_transforms, scattering_at, scattering_matrix, strip_widths, transforms_at, transmission_matrix,
    BlockTransforms,
};

use serde::{Deserialize, Serialize};

use crate::domain::{SINGULARITY_TOL, TAIL_TOL};

/// Discretization and stopping parameters shared by the forward solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Step in `x` (and in `t - x` for kernels).
    pub h: f64,
    pub tail_tol: f64,
    pub iteration_tol: f64,
    pub max_sweeps: usize,
    /// Overrides the envelope-based truncation of bounded solutions.
    pub x_max: Option<f64>,
    /// Overrides the envelope-based truncation of kernels.
    pub t_max: Option<f64>,
    pub singularity_tol: f64,
    /// Rows `x = const` of the kernels kept at full resolution besides `x = 0`.
    pub stored_rows: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            h: 0.01,
            tail_tol: TAIL_TOL,
            iteration_tol: 1e-12,
            max_sweeps: 50,
            x_max: None,
            t_max: None,
            singularity_tol: SINGULARITY_TOL,
            stored_rows: vec![0.5, 1.0, 2.0, 3.0, 5.0],
        }
    }
}

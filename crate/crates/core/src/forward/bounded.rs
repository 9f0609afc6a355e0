//! Bounded solutions for real `lambda`, via successive approximation on
//! `w = e^{-i lambda sigma x} y`:
//!
//! ```text
//! w_r(x) = c_r + i sum_c int_x^X Q_rc(s) e^{i lambda (xi_c - xi_r) s} w_c(s) ds
//! ```
//!
//! with `c = (A, B)` the asymptotic amplitudes.

use super::{SolverOptions, TOKernels};
use crate::domain::{Dispersion, MCanonicalPotential};
use crate::error::{IspError, Result};
use crate::quad::{cumulative_from_right, integrate, FilonWeights};
use crate::{C64, I};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundedSolution {
    pub lambda: f64,
    pub dx: f64,
    /// `y1[m]`, `y2[m]` at `x = m dx`.
    pub y1: Vec<Vec<C64>>,
    pub y2: Vec<Vec<C64>>,
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub sweeps: usize,
}

impl BoundedSolution {
    pub fn x_max(&self) -> f64 {
        self.dx * (self.y1.len() - 1) as f64
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..self.y1.len()).map(|m| m as f64 * self.dx).collect()
    }

    /// Full `2n` vector at node `m`.
    pub fn y(&self, m: usize) -> Vec<C64> {
        let mut v = self.y1[m].clone();
        v.extend_from_slice(&self.y2[m]);
        v
    }
}

struct Coupling {
    r: usize,
    c: usize,
    q: Vec<C64>,
    weights: FilonWeights,
}

fn couplings(pot: &MCanonicalPotential, disp: &Dispersion, lambda: f64, dx: f64, len: usize) -> Vec<Coupling> {
    pot.nonzero_entries()
        .into_iter()
        .map(|(r, c)| {
            let profile = pot.entry(r, c);
            let q = (0..len).map(|m| profile.eval(m as f64 * dx)).collect();
            let omega = C64::new(lambda * (disp.speed(c) - disp.speed(r)), 0.0);
            Coupling { r, c, q, weights: FilonWeights::new(omega, dx) }
        })
        .collect()
}

pub fn solve_bounded_solution(
    pot: &MCanonicalPotential,
    disp: &Dispersion,
    lambda: f64,
    a: &[C64],
    b: &[C64],
) -> Result<BoundedSolution> {
    solve_bounded_solution_with(pot, disp, lambda, a, b, &SolverOptions::default())
}

pub fn solve_bounded_solution_with(
    pot: &MCanonicalPotential,
    disp: &Dispersion,
    lambda: f64,
    a: &[C64],
    b: &[C64],
    opts: &SolverOptions,
) -> Result<BoundedSolution> {
    let n = pot.n;
    if disp.n() != n || a.len() != n || b.len() != n {
        return Err(IspError::DimensionMismatch("amplitudes, potential and dispersion must share n".into()));
    }
    if !lambda.is_finite() {
        return Err(IspError::InvalidGrid("lambda must be finite".into()));
    }
    pot.ensure_valid()?;
    let m = 2 * n;
    let dx = opts.h;
    let x_max = opts.x_max.unwrap_or_else(|| pot.envelope.truncation(opts.tail_tol));
    let len = (x_max / dx).ceil() as usize + 1;
    let amps: Vec<C64> = a.iter().chain(b).copied().collect();
    let coup = couplings(pot, disp, lambda, dx, len);

    let mut w: Vec<Vec<C64>> = (0..m).map(|r| vec![amps[r]; len]).collect();
    let mut sweeps = 0;
    if !coup.is_empty() {
        loop {
            sweeps += 1;
            let mut next: Vec<Vec<C64>> = (0..m).map(|r| vec![amps[r]; len]).collect();
            for cp in &coup {
                let integrand: Vec<C64> = cp.q.iter().zip(&w[cp.c]).map(|(q, v)| q * v).collect();
                let tail = cumulative_from_right(&integrand, 0.0, dx, &cp.weights);
                for (o, t) in next[cp.r].iter_mut().zip(&tail) {
                    *o += I * t;
                }
            }
            let change = next
                .iter()
                .zip(&w)
                .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).norm()))
                .fold(0.0, f64::max);
            w = next;
            if change < opts.iteration_tol {
                break;
            }
            if sweeps >= opts.max_sweeps {
                return Err(IspError::NonConvergence { sweeps, last_change: change });
            }
        }
    }
    let phase = |r: usize, mm: usize| (I * lambda * disp.speed(r) * (mm as f64 * dx)).exp();
    let y1 = (0..len).map(|mm| (0..n).map(|r| w[r][mm] * phase(r, mm)).collect()).collect();
    let y2 = (0..len).map(|mm| (n..m).map(|r| w[r][mm] * phase(r, mm)).collect()).collect();
    Ok(BoundedSolution { lambda, dx, y1, y2, a: a.to_vec(), b: b.to_vec(), sweeps })
}

/// Amplitudes `(A, B)` from the solution values: `w(inf) = w(0) - i int_0^inf e^{-i lambda sigma s} Q y ds`.
pub fn asymptotic_coefficients(
    sol: &BoundedSolution,
    pot: &MCanonicalPotential,
    disp: &Dispersion,
) -> (Vec<C64>, Vec<C64>) {
    let n = pot.n;
    let m = 2 * n;
    let len = sol.y1.len();
    let dx = sol.dx;
    let lambda = sol.lambda;
    let mut amps: Vec<C64> = sol.y(0);
    for (r, c) in pot.nonzero_entries() {
        let profile = pot.entry(r, c);
        // Q_rc(s) w_c(s), oscillating with e^{i lambda (xi_c - xi_r) s}
        let samples: Vec<C64> = (0..len)
            .map(|mm| {
                let s = mm as f64 * dx;
                let yc = if c < n { sol.y1[mm][c] } else { sol.y2[mm][c - n] };
                profile.eval(s) * yc * (-I * lambda * disp.speed(c) * s).exp()
            })
            .collect();
        let omega = C64::new(lambda * (disp.speed(c) - disp.speed(r)), 0.0);
        amps[r] -= I * integrate(&samples, 0.0, dx, omega);
    }
    let b = amps.split_off(n);
    debug_assert_eq!(b.len(), m - n);
    (amps, b)
}

/// `y(x_row) = e^{i lambda sigma x} c + int_x^T K(x, t) e^{i lambda sigma t} c dt`
/// on a stored kernel row.
pub fn reconstruct_from_kernels(
    kernels: &TOKernels,
    disp: &Dispersion,
    x_index: usize,
    lambda: f64,
    amplitudes: &[C64],
) -> Result<Vec<C64>> {
    let m = kernels.m();
    if amplitudes.len() != m {
        return Err(IspError::DimensionMismatch("amplitudes must have length 2n".into()));
    }
    let row = kernels
        .row(x_index)
        .ok_or_else(|| IspError::InvalidGrid(format!("kernel row {x_index} is not stored")))?;
    let x = row.x;
    let mut y: Vec<C64> = (0..m).map(|r| (I * lambda * disp.speed(r) * x).exp() * amplitudes[r]).collect();
    for (r, yr) in y.iter_mut().enumerate() {
        for (c, amp) in amplitudes.iter().enumerate() {
            let samples = kernels.row_entry(row, r, c);
            if samples.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let omega = C64::new(lambda * disp.speed(c), 0.0);
            *yr += integrate(&samples, x, kernels.h, omega) * amp;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Block, Envelope, ScalarProfile};

    fn n1(gamma: f64) -> (MCanonicalPotential, Dispersion) {
        let disp = Dispersion::new(vec![-1.0, 1.0]).unwrap();
        let pot = MCanonicalPotential::zero(1, Envelope { c: 1.0, eps: 1.0 })
            .with(Block::B12, 0, 0, ScalarProfile::exp(C64::new(gamma, 0.0), 1.0));
        (pot, disp)
    }

    #[test]
    fn free_solution_is_exponential() {
        let disp = Dispersion::new(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let pot = MCanonicalPotential::zero(2, Envelope { c: 1.0, eps: 1.0 });
        let a = [C64::new(1.0, 0.5), C64::new(-0.3, 0.0)];
        let b = [C64::new(0.0, 1.0), C64::new(2.0, 0.0)];
        let sol = solve_bounded_solution(&pot, &disp, 1.7, &a, &b).unwrap();
        for mm in [0, 100, 1000] {
            let x = mm as f64 * sol.dx;
            for k in 0..2 {
                assert!((sol.y1[mm][k] - (I * 1.7 * disp.speed(k) * x).exp() * a[k]).norm() < 1e-13);
                assert!((sol.y2[mm][k] - (I * 1.7 * disp.speed(k + 2) * x).exp() * b[k]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn triangular_case_closed_form() {
        let (pot, disp) = n1(1.0);
        for lambda in [0.0, -3.0, 0.8, 12.0] {
            let sol = solve_bounded_solution(&pot, &disp, lambda, &[C64::new(1.0, 0.0)], &[C64::new(1.0, 0.0)]).unwrap();
            let want = 1.0 + I / (1.0 - 2.0 * I * lambda);
            assert!((sol.y1[0][0] - want).norm() < 1e-9, "lambda={lambda}: {}", sol.y1[0][0]);
            assert!((sol.y2[0][0] - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn triangular_case_matches_rk4_integration() {
        // independent check: march y' = i lambda sigma y - i Q y from X with RK4
        let (pot, disp) = n1(1.0);
        let lambda = 2.3;
        let sol = solve_bounded_solution(&pot, &disp, lambda, &[C64::new(0.4, 0.0)], &[C64::new(1.0, -1.0)]).unwrap();
        let x_end = sol.x_max();
        let rhs = |x: f64, y: [C64; 2]| -> [C64; 2] {
            let q = (-x).exp();
            [I * lambda * -1.0 * y[0] - I * q * y[1], I * lambda * y[1]]
        };
        let mut y = [
            (I * lambda * -1.0 * x_end).exp() * 0.4,
            (I * lambda * x_end).exp() * C64::new(1.0, -1.0),
        ];
        let steps = 40000;
        let h = -x_end / steps as f64;
        let mut x = x_end;
        for _ in 0..steps {
            let k1 = rhs(x, y);
            let k2 = rhs(x + h / 2.0, [y[0] + k1[0] * h / 2.0, y[1] + k1[1] * h / 2.0]);
            let k3 = rhs(x + h / 2.0, [y[0] + k2[0] * h / 2.0, y[1] + k2[1] * h / 2.0]);
            let k4 = rhs(x + h, [y[0] + k3[0] * h, y[1] + k3[1] * h]);
            for k in 0..2 {
                y[k] += (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]) * h / 6.0;
            }
            x += h;
        }
        assert!((sol.y1[0][0] - y[0]).norm() < 1e-8);
        assert!((sol.y2[0][0] - y[1]).norm() < 1e-8);
    }

    #[test]
    fn amplitudes_round_trip() {
        let disp = Dispersion::new(vec![-1.5, 1.0]).unwrap();
        let pot = MCanonicalPotential::zero(1, Envelope { c: 1.0, eps: 1.0 })
            .with(Block::B12, 0, 0, ScalarProfile::exp(C64::new(0.5, 0.5), 1.0))
            .with(Block::B21, 0, 0, ScalarProfile::exp(C64::new(-0.7, 0.1), 1.3));
        let a = [C64::new(0.2, -1.0)];
        let b = [C64::new(1.1, 0.3)];
        for lambda in [-4.0, 0.0, 1.5] {
            let sol = solve_bounded_solution(&pot, &disp, lambda, &a, &b).unwrap();
            let (ra, rb) = asymptotic_coefficients(&sol, &pot, &disp);
            assert!((ra[0] - a[0]).norm() < 1e-8 && (rb[0] - b[0]).norm() < 1e-8);
        }
    }

    #[test]
    fn amplitude_a_vanishes_for_zero_input() {
        let (pot, disp) = n1(1.0);
        let sol = solve_bounded_solution(&pot, &disp, 0.7, &[C64::new(0.0, 0.0)], &[C64::new(1.0, 0.0)]).unwrap();
        let (ra, _) = asymptotic_coefficients(&sol, &pot, &disp);
        assert!(ra[0].norm() < 1e-9);
    }
}

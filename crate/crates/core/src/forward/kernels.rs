//! Transformation-operator kernels on the triangle `t >= x >= 0`.
//!
//! All four blocks are handled as one `2n x 2n` kernel `K`, entry `(r, c)`
//! obeying
//!
//! ```text
//! d/dx K_rc + (xi_r / xi_c) d/dt K_rc = -i (Q K)_rc,
//! K_rc(x, x) = i xi_c / (xi_c - xi_r) Q_rc(x)       (r != c),
//! K(x, t) -> 0 as t -> inf.
//! ```
//!
//! Every entry that the structure allows to be nonzero has slope
//! `xi_r / xi_c < 1`, so its characteristic, followed towards larger `x`,
//! either reaches the diagonal (off-diagonal entries) or runs off to
//! infinity parallel to it (diagonal entries).  The solver marches rows
//! `x = const` from the truncation point down to `x = 0` in the coordinates
//! `(x, tau = t - x)`, integrating each characteristic by the trapezoid rule
//! and interpolating the previous row with cubic Lagrange stencils.

use rayon::prelude::*;

use super::SolverOptions;
use crate::domain::{theta_exponent, Block, Dispersion, MCanonicalPotential, ScalarProfile};
use crate::error::{IspError, Result};
use crate::{CMatrix, C64, I};

/// A full row `x = x_index * h`, node-major: node `j` (`tau = j h`) holds the
/// `m x m` matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRow {
    pub index: usize,
    pub x: f64,
    values: Vec<C64>,
}

impl StoredRow {
    pub fn nodes(&self, m: usize) -> usize {
        self.values.len() / (m * m)
    }
}

/// Discretized kernels `A11, A12, A21, A22` as one `2n x 2n` kernel.
#[derive(Clone, Debug)]
pub struct TOKernels {
    pub n: usize,
    pub h: f64,
    /// Number of steps; `t_max = steps * h`.
    pub steps: usize,
    pub theta: f64,
    pub eps: f64,
    /// Smallest `C` with `|K(x,t)| <= C e^{-eps (x + theta (t - x))}` on the stored nodes.
    pub c_tilde: f64,
    /// Largest number of fixed-point iterations used at any node.
    pub coupling_iterations: usize,
    rows: Vec<StoredRow>,
    /// `K(x_i, x_i)` for every row, row-major matrices.
    diagonal: Vec<C64>,
    /// `K(x_i, x_i + j h)`, `j = 1..=BAND`, for every row.
    band: Vec<C64>,
}

/// Off-diagonal nodes kept for every row.
const BAND: usize = 4;

impl TOKernels {
    pub fn m(&self) -> usize {
        2 * self.n
    }

    pub fn t_max(&self) -> f64 {
        self.steps as f64 * self.h
    }

    /// Row `x = 0` followed by the other kept rows in increasing `x`.
    pub fn rows(&self) -> &[StoredRow] {
        &self.rows
    }

    pub fn row(&self, x_index: usize) -> Option<&StoredRow> {
        self.rows.iter().find(|r| r.index == x_index)
    }

    /// `K_rc(x_row, x_row + j h)` for `j = 0..`.
    pub fn row_entry(&self, row: &StoredRow, r: usize, c: usize) -> Vec<C64> {
        let m = self.m();
        let m2 = m * m;
        row.values.chunks(m2).map(|node| node[r * m + c]).collect()
    }

    /// `K(x_row, x_row + j h)` as a matrix.
    pub fn row_matrix(&self, row: &StoredRow, j: usize) -> CMatrix {
        let m = self.m();
        let m2 = m * m;
        CMatrix::from_row_slice(m, m, &row.values[j * m2..(j + 1) * m2])
    }

    /// `K_rc(0, t_j)` for `t_j = j h`.
    pub fn boundary_entry(&self, r: usize, c: usize) -> Vec<C64> {
        self.row_entry(&self.rows[0], r, c)
    }

    /// `K_rc(x_i, x_i)` for every row `i`.
    pub fn diagonal_entry(&self, r: usize, c: usize) -> Vec<C64> {
        let m = self.m();
        self.diagonal.chunks(m * m).map(|node| node[r * m + c]).collect()
    }

    /// `K_rc(x, x)` extrapolated from `K_rc(x, x + j h)`, `j = 1..=4`; rows
    /// too close to the truncation fall back to the stored trace.
    pub fn extrapolated_trace(&self, r: usize, c: usize) -> Vec<C64> {
        let m2 = self.m() * self.m();
        let e = r * self.m() + c;
        (0..=self.steps)
            .map(|i| {
                if self.steps - i < BAND {
                    return self.diagonal[i * m2 + e];
                }
                let at = |j: usize| self.band[(i * BAND + j - 1) * m2 + e];
                at(1) * 4.0 - at(2) * 6.0 + at(3) * 4.0 - at(4)
            })
            .collect()
    }

    /// Entry of block `b` at one-based `(k, j)`, along `x = 0`.
    pub fn block_boundary(&self, b: Block, k: usize, j: usize) -> Vec<C64> {
        let (r, c) = b.global(self.n, k - 1, j - 1);
        self.boundary_entry(r, c)
    }

    /// Frobenius norm of block `b` of `K(x_row, x_row + j h)`.
    pub fn block_norm(&self, row: &StoredRow, j: usize, b: Block) -> f64 {
        let m = self.m();
        let base = j * m * m;
        let mut acc = 0.0;
        for k in 0..self.n {
            for l in 0..self.n {
                let (r, c) = b.global(self.n, k, l);
                acc += row.values[base + r * m + c].norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Least-squares slope of `ln |A_b(0, t)|` over `t in [t_lo, t_hi]`,
    /// skipping nodes below `floor` relative to the largest value.
    pub fn decay_slope(&self, b: Block, t_lo: f64, t_hi: f64) -> Option<f64> {
        let row = &self.rows[0];
        let nodes = row.nodes(self.m());
        let norms: Vec<f64> = (0..nodes).map(|j| self.block_norm(row, j, b)).collect();
        let peak = norms.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return None;
        }
        let pts: Vec<(f64, f64)> = norms
            .iter()
            .enumerate()
            .map(|(j, &v)| (j as f64 * self.h, v))
            .filter(|&(t, v)| t >= t_lo && t <= t_hi && v > 1e-10 * peak)
            .map(|(t, v)| (t, v.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / k, sy / k);
        let (sxy, sxx) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx) * (p.0 - mx)));
        Some(sxy / sxx)
    }

    /// All rows as flat `(x, t, r, c, value)` records.
    pub fn records(&self) -> impl Iterator<Item = (f64, f64, usize, usize, C64)> + '_ {
        let m = self.m();
        self.rows.iter().flat_map(move |row| {
            row.values.chunks(m * m).enumerate().flat_map(move |(j, node)| {
                let t = row.x + j as f64 * self.h;
                node.iter().enumerate().map(move |(e, &v)| (row.x, t, e / m, e % m, v))
            })
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct EntryPlan {
    r: usize,
    c: usize,
    /// `1 - xi_r / xi_c`; zero on the diagonal.
    gap: f64,
    /// `i xi_c / (xi_c - xi_r)`.
    bc: C64,
}

/// Entries that can become nonzero for this potential's sparsity, with the rows
/// of `Q` that feed them.
fn plan_entries(pot: &MCanonicalPotential, disp: &Dispersion) -> Result<(Vec<EntryPlan>, Vec<Vec<usize>>)> {
    let m = 2 * pot.n;
    let mut q_nz = vec![vec![false; m]; m];
    for (r, c) in pot.nonzero_entries() {
        q_nz[r][c] = true;
    }
    let mut live = q_nz.clone();
    loop {
        let mut changed = false;
        for r in 0..m {
            for c in 0..m {
                if !live[r][c] && (0..m).any(|k| q_nz[r][k] && live[k][c]) {
                    live[r][c] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut plans = Vec::new();
    for r in 0..m {
        for c in 0..m {
            if !live[r][c] {
                continue;
            }
            let rho = disp.speed(r) / disp.speed(c);
            if r != c && rho >= 1.0 {
                return Err(IspError::InvalidPotential(format!(
                    "kernel entry ({}, {}) would propagate away from the diagonal; the potential is not M-canonical",
                    r + 1,
                    c + 1
                )));
            }
            let bc = if r == c {
                C64::new(0.0, 0.0)
            } else {
                I * disp.speed(c) / (disp.speed(c) - disp.speed(r))
            };
            plans.push(EntryPlan { r, c, gap: if r == c { 0.0 } else { 1.0 - rho }, bc });
        }
    }
    let q_rows = (0..m).map(|r| (0..m).filter(|&k| q_nz[r][k]).collect()).collect();
    Ok((plans, q_rows))
}

/// Truncation of `t` so the kernel bound falls below `tail_tol`.
fn default_t_max(pot: &MCanonicalPotential, disp: &Dispersion, theta: f64, tail_tol: f64) -> f64 {
    let m = 2 * pot.n;
    let mut rmax: f64 = 1.0;
    for r in 0..m {
        for c in 0..m {
            if r != c {
                rmax = rmax.max((disp.speed(c) / (disp.speed(c) - disp.speed(r))).abs());
            }
        }
    }
    let env = pot.envelope;
    ((env.c * rmax / tail_tol).ln() / (env.eps * theta)).max(1.0)
}

pub fn solve_to_kernels(pot: &MCanonicalPotential, disp: &Dispersion) -> Result<TOKernels> {
    solve_to_kernels_with(pot, disp, &SolverOptions::default())
}

pub fn solve_to_kernels_with(pot: &MCanonicalPotential, disp: &Dispersion, opts: &SolverOptions) -> Result<TOKernels> {
    if pot.n != disp.n() {
        return Err(IspError::DimensionMismatch(format!(
            "potential has n = {} but dispersion has n = {}",
            pot.n,
            disp.n()
        )));
    }
    pot.ensure_valid()?;
    if !(opts.h > 0.0) {
        return Err(IspError::InvalidGrid("step h must be positive".into()));
    }
    let n = pot.n;
    let m = 2 * n;
    let m2 = m * m;
    let h = opts.h;
    let theta = theta_exponent(disp);
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(pot, disp, theta, opts.tail_tol));
    let steps = (t_max / h).ceil().max(4.0) as usize;
    let (plans, q_rows) = plan_entries(pot, disp)?;

    let keep: Vec<usize> = {
        let mut v: Vec<usize> = std::iter::once(0)
            .chain(opts.stored_rows.iter().map(|&x| (x / h).round() as usize))
            .filter(|&i| i <= steps)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    let mut diagonal = vec![C64::new(0.0, 0.0); (steps + 1) * m2];
    let mut band = vec![C64::new(0.0, 0.0); (steps + 1) * BAND * m2];
    let mut rows: Vec<StoredRow> = Vec::new();
    let mut max_iters = 0usize;

    if plans.is_empty() {
        for &i in &keep {
            rows.push(StoredRow { index: i, x: i as f64 * h, values: vec![C64::new(0.0, 0.0); (steps - i + 1) * m2] });
        }
        return Ok(TOKernels { n, h, steps, theta, eps: pot.envelope.eps, c_tilde: 0.0, coupling_iterations: 0, rows, diagonal, band });
    }

    let q_at = |x: f64| -> Vec<C64> {
        let mut q = vec![C64::new(0.0, 0.0); m2];
        for (r, ks) in q_rows.iter().enumerate() {
            for &k in ks {
                q[r * m + k] = pot.entry(r, k).eval(x);
            }
        }
        q
    };
    let entry_profiles: Vec<Option<&ScalarProfile>> =
        plans.iter().map(|p| if p.r != p.c { Some(pot.entry(p.r, p.c)) } else { None }).collect();

    // K and F = Q K on the previous row (x + h); start at x = T: only tau = 0.
    let mut prev_k = vec![C64::new(0.0, 0.0); m2];
    let mut prev_f = vec![C64::new(0.0, 0.0); m2];
    {
        let x = steps as f64 * h;
        let q = q_at(x);
        for p in plans.iter().filter(|p| p.r != p.c) {
            prev_k[p.r * m + p.c] = p.bc * q[p.r * m + p.c];
        }
        prev_f = mat_mul_live(&q, &prev_k, &plans, &q_rows, m);
        diagonal[steps * m2..].copy_from_slice(&prev_k);
        if keep.contains(&steps) {
            rows.push(StoredRow { index: steps, x, values: prev_k.clone() });
        }
    }

    for i in (0..steps).rev() {
        let x = i as f64 * h;
        let len = steps - i + 1;
        let prev_len = len - 1;
        let q = q_at(x);
        let mut cur_k = vec![C64::new(0.0, 0.0); len * m2];
        let mut cur_f = vec![C64::new(0.0, 0.0); len * m2];

        // node tau = 0: boundary values, then the diagonal entries by one explicit step
        for p in plans.iter().filter(|p| p.r != p.c) {
            cur_k[p.r * m + p.c] = p.bc * q[p.r * m + p.c];
        }
        for p in plans.iter().filter(|p| p.r == p.c) {
            let c = p.c;
            let qk: C64 = q_rows[c].iter().map(|&k| q[c * m + k] * cur_k[k * m + c]).sum();
            cur_k[c * m + c] = prev_k[c * m + c] + 0.5 * I * h * (prev_f[c * m + c] + qk);
        }
        let node0 = mat_mul_live(&q, &cur_k[..m2], &plans, &q_rows, m);
        cur_f[..m2].copy_from_slice(&node0);

        let ctx = RowContext {
            x,
            h,
            m,
            plans: &plans,
            q_rows: &q_rows,
            q: &q,
            prev_k: &prev_k,
            prev_f: &prev_f,
            prev_len,
            node0_k: &cur_k[..m2].to_vec(),
            pot,
            profiles: &entry_profiles,
            iteration_tol: opts.iteration_tol,
        };

        const CHUNK: usize = 256;
        let iters = cur_k[m2..]
            .par_chunks_mut(CHUNK * m2)
            .zip(cur_f[m2..].par_chunks_mut(CHUNK * m2))
            .enumerate()
            .map(|(ci, (kc, fc))| {
                let mut worst = 0usize;
                let mut b = vec![C64::new(0.0, 0.0); ctx.plans.len()];
                let mut w = vec![0.0; ctx.plans.len()];
                for (local, (kn, fnode)) in kc.chunks_mut(m2).zip(fc.chunks_mut(m2)).enumerate() {
                    let j = 1 + ci * CHUNK + local;
                    worst = worst.max(ctx.solve_node(j, kn, fnode, &mut b, &mut w));
                }
                worst
            })
            .max()
            .unwrap_or(0);
        max_iters = max_iters.max(iters);

        diagonal[i * m2..(i + 1) * m2].copy_from_slice(&cur_k[..m2]);
        let nb = BAND.min(len - 1);
        band[i * BAND * m2..(i * BAND + nb) * m2].copy_from_slice(&cur_k[m2..(nb + 1) * m2]);
        if keep.contains(&i) {
            rows.push(StoredRow { index: i, x, values: cur_k.clone() });
        }
        prev_k = cur_k;
        prev_f = cur_f;
    }
    rows.sort_by_key(|r| r.index);

    let mut kernels = TOKernels { n, h, steps, theta, eps: pot.envelope.eps, c_tilde: 0.0, coupling_iterations: max_iters, rows, diagonal, band };
    kernels.c_tilde = fit_c_tilde(&kernels);
    Ok(kernels)
}

fn mat_mul_live(q: &[C64], k: &[C64], plans: &[EntryPlan], q_rows: &[Vec<usize>], m: usize) -> Vec<C64> {
    let mut f = vec![C64::new(0.0, 0.0); m * m];
    for p in plans {
        f[p.r * m + p.c] = q_rows[p.r].iter().map(|&l| q[p.r * m + l] * k[l * m + p.c]).sum();
    }
    f
}

struct RowContext<'a> {
    x: f64,
    h: f64,
    m: usize,
    plans: &'a [EntryPlan],
    q_rows: &'a [Vec<usize>],
    q: &'a [C64],
    prev_k: &'a [C64],
    prev_f: &'a [C64],
    prev_len: usize,
    node0_k: &'a [C64],
    pot: &'a MCanonicalPotential,
    profiles: &'a [Option<&'a ScalarProfile>],
    iteration_tol: f64,
}

impl RowContext<'_> {
    /// Value of entry `e` of the previous row at fractional node `pos`;
    /// nodes past the end lie beyond the truncation and are zero.
    fn prev_value(&self, data: &[C64], e: usize, pos: f64) -> C64 {
        let m2 = self.m * self.m;
        let len = self.prev_len;
        let last = (len - 1) as f64;
        if pos > last {
            let v = data[(len - 1) * m2 + e];
            return if pos >= last + 1.0 { C64::new(0.0, 0.0) } else { v * (last + 1.0 - pos) };
        }
        if len < 4 {
            let base = (pos.floor() as usize).min(len.saturating_sub(2));
            let f = pos - base as f64;
            let a = data[base * m2 + e];
            let b = if base + 1 < len { data[(base + 1) * m2 + e] } else { a };
            return a * (1.0 - f) + b * f;
        }
        let base = pos.floor() as isize;
        let start = (base - 1).clamp(0, len as isize - 4) as usize;
        let u = pos - start as f64;
        // cubic Lagrange weights on nodes 0..3
        let w = [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ];
        (0..4).map(|a| data[(start + a) * m2 + e] * w[a]).sum()
    }

    /// Fills node `j >= 1` of the current row; returns the fixed-point iteration count.
    fn solve_node(&self, j: usize, k_out: &mut [C64], f_out: &mut [C64], b: &mut [C64], w: &mut [f64]) -> usize {
        let m = self.m;
        let h = self.h;
        let tau = j as f64 * h;
        for (idx, p) in self.plans.iter().enumerate() {
            let e = p.r * m + p.c;
            let pos = j as f64 - p.gap;
            if pos >= 0.0 {
                let k = self.prev_value(self.prev_k, e, pos);
                let f = self.prev_value(self.prev_f, e, pos);
                b[idx] = k + 0.5 * I * h * f;
                w[idx] = h;
            } else {
                // the characteristic meets the diagonal at x + u
                let u = tau / p.gap;
                let xu = self.x + u;
                let frac = u / h;
                let profile = self.profiles[idx].expect("off-diagonal entry");
                let kd = p.bc * profile.eval(xu);
                let mut fd = C64::new(0.0, 0.0);
                for &l in &self.q_rows[p.r] {
                    let q_rl = self.pot.entry(p.r, l).eval(xu);
                    let k_lc = if l == p.c {
                        let here = self.node0_k[p.c * m + p.c];
                        let there = self.prev_k[p.c * m + p.c];
                        here * (1.0 - frac) + there * frac
                    } else {
                        boundary_value(self.pot, l, p.c, self.plans, xu)
                    };
                    fd += q_rl * k_lc;
                }
                b[idx] = kd + 0.5 * I * u * fd;
                w[idx] = u;
            }
        }
        // K = b + (i w / 2) Q(x) K, by fixed-point iteration
        for (idx, p) in self.plans.iter().enumerate() {
            k_out[p.r * m + p.c] = b[idx];
        }
        let mut iters = 0;
        loop {
            iters += 1;
            let mut change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (idx, p) in self.plans.iter().enumerate() {
                let qk: C64 = self.q_rows[p.r].iter().map(|&l| self.q[p.r * m + l] * k_out[l * m + p.c]).sum();
                let new = b[idx] + 0.5 * I * w[idx] * qk;
                let e = p.r * m + p.c;
                change = change.max((new - k_out[e]).norm());
                scale = scale.max(new.norm());
                k_out[e] = new;
            }
            if change <= self.iteration_tol * 1e-3 * scale.max(1e-300) || change == 0.0 || iters >= 60 {
                break;
            }
        }
        for p in self.plans {
            f_out[p.r * m + p.c] = self.q_rows[p.r].iter().map(|&l| self.q[p.r * m + l] * k_out[l * m + p.c]).sum();
        }
        iters
    }
}

/// `K_lc(y, y)` for an off-diagonal entry, zero when the entry is not live.
fn boundary_value(pot: &MCanonicalPotential, l: usize, c: usize, plans: &[EntryPlan], y: f64) -> C64 {
    plans
        .iter()
        .find(|p| p.r == l && p.c == c)
        .map(|p| p.bc * pot.entry(l, c).eval(y))
        .unwrap_or_default()
}

fn fit_c_tilde(k: &TOKernels) -> f64 {
    let m = k.m();
    let mut best: f64 = 0.0;
    for row in &k.rows {
        for (j, node) in row.values.chunks(m * m).enumerate() {
            let norm = node.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let bound = (-k.eps * (row.x + k.theta * j as f64 * k.h)).exp();
            best = best.max(norm / bound);
        }
    }
    best
}

/// Potential recovered from the traces `K(x, x)`, as sampled profiles on the
/// kernel grid. The traces are extrapolated from the four nodes next to the
/// diagonal, so the result reflects the computed interior of the kernel.
pub fn potential_from_kernels(kernels: &TOKernels, disp: &Dispersion) -> Result<MCanonicalPotential> {
    let n = kernels.n;
    if disp.n() != n {
        return Err(IspError::DimensionMismatch("kernels and dispersion disagree on n".into()));
    }
    let m = 2 * n;
    let eps = kernels.eps;
    let mut pot = MCanonicalPotential::zero(n, crate::domain::Envelope { c: 1.0, eps });
    let mut env_c: f64 = 0.0;
    for r in 0..m {
        for c in 0..m {
            if r == c {
                continue;
            }
            let diag = kernels.extrapolated_trace(r, c);
            if diag.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let factor = -I * (disp.speed(c) - disp.speed(r)) / disp.speed(c);
            let values: Vec<C64> = diag.iter().map(|z| z * factor).collect();
            for (i, v) in values.iter().enumerate() {
                env_c = env_c.max(v.norm() * (eps * i as f64 * kernels.h).exp());
            }
            let (b, k, j) = Block::locate(n, r, c);
            pot.set(b, k, j, ScalarProfile::sampled(kernels.h, values, eps)?);
        }
    }
    if env_c > 0.0 {
        // linear interpolation between nodes may overshoot the samples' envelope by one step
        pot.envelope.c = env_c * (eps * kernels.h).exp();
    }
    Ok(pot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Envelope;

    fn n1_fixture(gamma: f64) -> (MCanonicalPotential, Dispersion) {
        let disp = Dispersion::new(vec![-1.0, 1.0]).unwrap();
        let pot = MCanonicalPotential::zero(1, Envelope { c: gamma.abs().max(1e-3), eps: 1.0 })
            .with(Block::B12, 0, 0, ScalarProfile::exp(C64::new(gamma, 0.0), 1.0));
        (pot, disp)
    }

    #[test]
    fn zero_potential_gives_zero_kernels() {
        let disp = Dispersion::new(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let pot = MCanonicalPotential::zero(2, Envelope { c: 1.0, eps: 1.0 });
        let k = solve_to_kernels(&pot, &disp).unwrap();
        assert!(k.records().all(|(_, _, _, _, v)| v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn n1_kernel_matches_closed_form() {
        let gamma = 1.3;
        let (pot, disp) = n1_fixture(gamma);
        let k = solve_to_kernels(&pot, &disp).unwrap();
        for row in k.rows() {
            let a12 = k.row_entry(row, 0, 1);
            for (j, v) in a12.iter().enumerate().step_by(37) {
                let t = row.x + j as f64 * k.h;
                let want = 0.5 * I * gamma * (-(row.x + t) / 2.0).exp();
                assert!((v - want).norm() < 1e-12, "x={} t={t}", row.x);
            }
            for (r, c) in [(0, 0), (1, 0), (1, 1)] {
                assert!(k.row_entry(row, r, c).iter().all(|z| z.norm() == 0.0));
            }
        }
    }

    #[test]
    fn n1_decay_slope_is_eps_theta() {
        let (pot, disp) = n1_fixture(1.0);
        let k = solve_to_kernels(&pot, &disp).unwrap();
        let slope = k.decay_slope(Block::B12, 1.0, 40.0).unwrap();
        assert!((slope + 0.5).abs() < 1e-6, "{slope}");
    }

    #[test]
    fn kernel_pde_residual_with_coupling() {
        // n = 1 with both anti-diagonal couplings: a genuinely coupled system
        let disp = Dispersion::new(vec![-1.0, 2.0]).unwrap();
        let pot = MCanonicalPotential::zero(1, Envelope { c: 1.0, eps: 1.0 })
            .with(Block::B12, 0, 0, ScalarProfile::exp(C64::new(0.6, 0.2), 1.0))
            .with(Block::B21, 0, 0, ScalarProfile::exp(C64::new(-0.3, 0.4), 1.5));
        let coarse = solve_to_kernels_with(&pot, &disp, &SolverOptions { h: 0.02, t_max: Some(30.0), ..Default::default() }).unwrap();
        let fine = solve_to_kernels_with(&pot, &disp, &SolverOptions { h: 0.01, t_max: Some(30.0), ..Default::default() }).unwrap();
        // second-order convergence: compare the two along x = 0
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let a = coarse.boundary_entry(r, c);
            let b = fine.boundary_entry(r, c);
            let diff = a.iter().enumerate().map(|(j, v)| (v - b[2 * j]).norm()).fold(0.0, f64::max);
            assert!(diff < 2e-4, "({r},{c}) diff {diff}");
        }
        // boundary condition on the diagonal
        let d = fine.diagonal_entry(0, 1);
        let want = I * 2.0 / 3.0 * C64::new(0.6, 0.2);
        assert!((d[0] - want).norm() < 1e-14);
    }

    #[test]
    fn recovered_potential_matches_input() {
        let disp = Dispersion::new(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let pot = MCanonicalPotential::zero(2, Envelope { c: 2.0, eps: 1.0 })
            .with(Block::B11, 1, 0, ScalarProfile::exp(C64::new(0.5, 0.0), 1.2))
            .with(Block::B12, 1, 1, ScalarProfile::exp(C64::new(0.0, 0.7), 1.0))
            .with(Block::B21, 0, 0, ScalarProfile::exp(C64::new(0.3, -0.3), 1.1));
        let k = solve_to_kernels_with(&pot, &disp, &SolverOptions { h: 0.02, ..Default::default() }).unwrap();
        let back = potential_from_kernels(&k, &disp).unwrap();
        for (r, c) in pot.nonzero_entries() {
            for x in [0.0, 0.36, 1.0, 4.9] {
                let a = pot.entry(r, c).eval(x);
                let b = back.entry(r, c).eval(x);
                assert!((a - b).norm() < 5e-6 * a.norm().max(1e-3), "({r},{c}) x={x}: {}", (a - b).norm());
            }
        }
        assert!(crate::domain::validate_potential(&back).is_valid());
    }
}

//! Core value types: dispersion speeds, scalar profiles, M-canonical
//! potentials and boundary matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IspError, Result};
use crate::quad::FilonWeights;
use crate::{CMatrix, C64, I};

/// Default threshold below which a determinant counts as zero.
pub const SINGULARITY_TOL: f64 = 1e-10;

/// Default bound on the discarded tail of half-line integrals.
pub const TAIL_TOL: f64 = 1e-12;

/// The ordered diagonal speeds of `sigma`: `n` negative followed by `n` positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DispersionRepr", into = "DispersionRepr")]
pub struct Dispersion {
    n: usize,
    xi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DispersionRepr {
    n: usize,
    xi: Vec<f64>,
}

impl TryFrom<DispersionRepr> for Dispersion {
    type Error = IspError;
    fn try_from(r: DispersionRepr) -> Result<Self> {
        let d = Dispersion::new(r.xi)?;
        if d.n != r.n {
            return Err(IspError::InvalidDispersion(format!(
                "n = {} but xi has {} entries",
                r.n,
                d.xi.len()
            )));
        }
        Ok(d)
    }
}

impl From<Dispersion> for DispersionRepr {
    fn from(d: Dispersion) -> Self {
        DispersionRepr { n: d.n, xi: d.xi }
    }
}

impl Dispersion {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() || xi.len() % 2 != 0 {
            return Err(IspError::InvalidDispersion(format!(
                "need an even, nonzero number of speeds, got {}",
                xi.len()
            )));
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(IspError::InvalidDispersion("speeds must be finite".into()));
        }
        if xi.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IspError::InvalidDispersion("speeds must be strictly increasing".into()));
        }
        let n = xi.len() / 2;
        if xi[n - 1] >= 0.0 || xi[n] <= 0.0 {
            return Err(IspError::InvalidDispersion(
                "first n speeds must be negative and last n positive".into(),
            ));
        }
        Ok(Self { n, xi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All `2n` speeds.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Speed by zero-based global index `0..2n`.
    pub fn speed(&self, idx: usize) -> f64 {
        self.xi[idx]
    }

    pub fn sigma1(&self) -> &[f64] {
        &self.xi[..self.n]
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.xi[self.n..]
    }

    pub fn xi_first(&self) -> f64 {
        self.xi[0]
    }

    pub fn xi_last(&self) -> f64 {
        self.xi[2 * self.n - 1]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.xi.iter().map(|x| x * factor).collect())
    }
}

/// Exponent `theta` of the kernel decay estimate
/// `||A(x,t)|| <= C e^{-eps (x + theta (t - x))}`.
pub fn theta_exponent(disp: &Dispersion) -> f64 {
    let n = disp.n;
    // one-based accessors, matching the index conventions of the four families
    let s = |k: usize| disp.xi[k - 1];
    let mut theta = f64::INFINITY;
    for k in 1..=n {
        for j in 1..=n {
            if k > j {
                theta = theta.min(s(j) / (s(j) - s(k)));
            }
            if k + j > n {
                theta = theta.min(s(n + j) / (s(n + j) - s(k)));
            }
            if k + j < n + 2 {
                theta = theta.min(s(j) / (s(j) - s(n + k)));
            }
            if k < j {
                theta = theta.min(s(n + j) / (s(n + j) - s(n + k)));
            }
        }
    }
    theta
}

/// One term `gamma e^{-a x}` of an exponential-sum profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub gamma: C64,
    pub a: f64,
}

/// Samples on `x = m dx`, linear in between, `v_last e^{-tail_rate (x - x_last)}` beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledProfile {
    pub dx: f64,
    pub values: Vec<C64>,
    pub tail_rate: f64,
}

impl SampledProfile {
    fn x_last(&self) -> f64 {
        self.dx * (self.values.len().saturating_sub(1)) as f64
    }
}

/// A complex scalar function on `[0, inf)` with exponential decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarProfile {
    ExpSum(Vec<ExpTerm>),
    Sampled(SampledProfile),
}

impl Default for ScalarProfile {
    fn default() -> Self {
        ScalarProfile::zero()
    }
}

impl ScalarProfile {
    pub fn zero() -> Self {
        ScalarProfile::ExpSum(Vec::new())
    }

    /// `gamma e^{-a x}`.
    pub fn exp(gamma: C64, a: f64) -> Self {
        ScalarProfile::ExpSum(vec![ExpTerm { gamma, a }])
    }

    pub fn exp_sum(terms: Vec<ExpTerm>) -> Result<Self> {
        let p = ScalarProfile::ExpSum(terms);
        p.check()?;
        Ok(p)
    }

    pub fn sampled(dx: f64, values: Vec<C64>, tail_rate: f64) -> Result<Self> {
        let p = ScalarProfile::Sampled(SampledProfile { dx, values, tail_rate });
        p.check()?;
        Ok(p)
    }

    /// Checks the representation invariants.
    pub fn check(&self) -> Result<()> {
        match self {
            ScalarProfile::ExpSum(terms) => {
                if let Some(t) = terms.iter().find(|t| !(t.a > 0.0) || !t.a.is_finite()) {
                    return Err(IspError::InvalidProfile(format!("decay rate must be positive, got {}", t.a)));
                }
            }
            ScalarProfile::Sampled(s) => {
                if !(s.dx > 0.0) || s.values.is_empty() || !(s.tail_rate > 0.0) {
                    return Err(IspError::InvalidProfile(
                        "sampled profile needs dx > 0, samples, and tail_rate > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarProfile::ExpSum(terms) => terms.iter().all(|t| t.gamma == C64::new(0.0, 0.0)),
            ScalarProfile::Sampled(s) => s.values.iter().all(|v| *v == C64::new(0.0, 0.0)),
        }
    }

    pub fn eval(&self, x: f64) -> C64 {
        match self {
            ScalarProfile::ExpSum(terms) => terms.iter().map(|t| t.gamma * (-t.a * x).exp()).sum(),
            ScalarProfile::Sampled(s) => {
                let last = s.values.len() - 1;
                let pos = x / s.dx;
                if pos >= last as f64 {
                    s.values[last] * (-s.tail_rate * (x - s.x_last())).exp()
                } else if pos <= 0.0 {
                    s.values[0]
                } else {
                    let m = pos.floor() as usize;
                    let f = pos - m as f64;
                    s.values[m] * (1.0 - f) + s.values[m + 1] * f
                }
            }
        }
    }

    /// `int_{x0}^inf c(x) e^{i omega x} dx`, for `Im omega` small enough that
    /// the integral converges.
    pub fn laplace_from(&self, x0: f64, omega: C64) -> C64 {
        match self {
            ScalarProfile::ExpSum(terms) => terms
                .iter()
                .map(|t| {
                    let z = t.a - I * omega;
                    t.gamma * (-z * x0).exp() / z
                })
                .sum(),
            ScalarProfile::Sampled(s) => {
                let x_last = s.x_last();
                let z = s.tail_rate - I * omega;
                if x0 >= x_last {
                    return self.eval(x0) * (I * omega * x0).exp() / z;
                }
                let tail = s.values[s.values.len() - 1] * (I * omega * x_last).exp() / z;
                // exact integral of the piecewise-linear interpolant
                let w = FilonWeights::new(omega, s.dx);
                let m0 = (x0 / s.dx).floor() as usize;
                let mut acc = C64::new(0.0, 0.0);
                // partial first interval [x0, x_{m0+1}]
                let x1 = (m0 + 1) as f64 * s.dx;
                let part = x1 - x0;
                if part > 0.0 {
                    let wp = FilonWeights::new(omega, part);
                    let v0 = self.eval(x0);
                    acc += (I * omega * x0).exp() * (wp.linear[0] * v0 + wp.linear[1] * s.values[m0 + 1]);
                }
                for m in (m0 + 1)..(s.values.len() - 1) {
                    let p = (I * omega * (m as f64 * s.dx)).exp();
                    acc += p * (w.linear[0] * s.values[m] + w.linear[1] * s.values[m + 1]);
                }
                acc + tail
            }
        }
    }

    /// `int_0^inf c(x) e^{i omega x} dx`.
    pub fn laplace(&self, omega: C64) -> C64 {
        self.laplace_from(0.0, omega)
    }

    /// Smallest decay rate present (the slowest exponential), if known.
    pub fn decay_rate(&self) -> Option<f64> {
        match self {
            ScalarProfile::ExpSum(terms) => terms
                .iter()
                .filter(|t| t.gamma != C64::new(0.0, 0.0))
                .map(|t| t.a)
                .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.min(a)))),
            ScalarProfile::Sampled(s) => Some(s.tail_rate),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        match self {
            ScalarProfile::ExpSum(terms) => ScalarProfile::ExpSum(
                terms.iter().map(|t| ExpTerm { gamma: t.gamma * factor, a: t.a }).collect(),
            ),
            ScalarProfile::Sampled(s) => ScalarProfile::Sampled(SampledProfile {
                dx: s.dx,
                values: s.values.iter().map(|v| v * factor).collect(),
                tail_rate: s.tail_rate,
            }),
        }
    }
}

/// Constants `(C, eps)` of the bound `|q(x)| <= C e^{-eps x}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    pub eps: f64,
}

impl Envelope {
    pub fn bound(&self, x: f64) -> f64 {
        self.c * (-self.eps * x).exp()
    }

    /// Length beyond which the envelope drops below `tail_tol`.
    pub fn truncation(&self, tail_tol: f64) -> f64 {
        ((self.c / tail_tol).ln() / self.eps).max(1.0)
    }
}

/// The four `n x n` blocks of the potential (and of the kernels).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    B11,
    B12,
    B21,
    B22,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::B11, Block::B12, Block::B21, Block::B22];

    pub fn label(&self) -> &'static str {
        match self {
            Block::B11 => "11",
            Block::B12 => "12",
            Block::B21 => "21",
            Block::B22 => "22",
        }
    }

    /// Block containing the zero-based global entry `(r, c)` of a `2n x 2n` matrix,
    /// with the zero-based local indices.
    pub fn locate(n: usize, r: usize, c: usize) -> (Block, usize, usize) {
        match (r < n, c < n) {
            (true, true) => (Block::B11, r, c),
            (true, false) => (Block::B12, r, c - n),
            (false, true) => (Block::B21, r - n, c),
            (false, false) => (Block::B22, r - n, c - n),
        }
    }

    pub fn global(&self, n: usize, k: usize, j: usize) -> (usize, usize) {
        match self {
            Block::B11 => (k, j),
            Block::B12 => (k, j + n),
            Block::B21 => (k + n, j),
            Block::B22 => (k + n, j + n),
        }
    }

    /// Whether the potential may be nonzero at one-based `(k, j)`.
    pub fn potential_allows(&self, n: usize, k: usize, j: usize) -> bool {
        match self {
            Block::B11 => j < k,
            Block::B12 => j + k > n,
            Block::B21 => j + k < n + 2,
            Block::B22 => j > k,
        }
    }

    /// Whether a transformation-operator kernel may be nonzero at one-based `(k, j)`.
    /// Same pattern as the potential, with the diagonal of the diagonal blocks added.
    pub fn kernel_allows(&self, n: usize, k: usize, j: usize) -> bool {
        match self {
            Block::B11 => j <= k,
            Block::B22 => j >= k,
            _ => self.potential_allows(n, k, j),
        }
    }

    pub fn rule(&self) -> &'static str {
        match self {
            Block::B11 => "strictly lower triangular",
            Block::B12 => "lower anti-triangular",
            Block::B21 => "upper anti-triangular",
            Block::B22 => "strictly upper triangular",
        }
    }
}

/// Potential `Q = [[q11, q12], [q21, q22]]` with M-canonical block structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCanonicalPotential {
    pub n: usize,
    pub q11: Vec<Vec<ScalarProfile>>,
    pub q12: Vec<Vec<ScalarProfile>>,
    pub q21: Vec<Vec<ScalarProfile>>,
    pub q22: Vec<Vec<ScalarProfile>>,
    pub envelope: Envelope,
}

impl MCanonicalPotential {
    pub fn zero(n: usize, envelope: Envelope) -> Self {
        let z = || vec![vec![ScalarProfile::zero(); n]; n];
        Self {
            n,
            q11: z(),
            q12: z(),
            q21: z(),
            q22: z(),
            envelope,
        }
    }

    pub fn block(&self, b: Block) -> &Vec<Vec<ScalarProfile>> {
        match b {
            Block::B11 => &self.q11,
            Block::B12 => &self.q12,
            Block::B21 => &self.q21,
            Block::B22 => &self.q22,
        }
    }

    fn block_mut(&mut self, b: Block) -> &mut Vec<Vec<ScalarProfile>> {
        match b {
            Block::B11 => &mut self.q11,
            Block::B12 => &mut self.q12,
            Block::B21 => &mut self.q21,
            Block::B22 => &mut self.q22,
        }
    }

    /// Sets the zero-based block entry `(k, j)`.
    pub fn set(&mut self, b: Block, k: usize, j: usize, profile: ScalarProfile) {
        self.block_mut(b)[k][j] = profile;
    }

    pub fn with(mut self, b: Block, k: usize, j: usize, profile: ScalarProfile) -> Self {
        self.set(b, k, j, profile);
        self
    }

    /// Entry of the full `2n x 2n` matrix at zero-based `(r, c)`.
    pub fn entry(&self, r: usize, c: usize) -> &ScalarProfile {
        let (b, k, j) = Block::locate(self.n, r, c);
        &self.block(b)[k][j]
    }

    /// Zero-based global indices of all entries that are not the zero profile.
    pub fn nonzero_entries(&self) -> Vec<(usize, usize)> {
        let m = 2 * self.n;
        let mut out = Vec::new();
        for r in 0..m {
            for c in 0..m {
                if !self.entry(r, c).is_zero() {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// `Q(x)` as a dense matrix.
    pub fn matrix_at(&self, x: f64) -> CMatrix {
        let m = 2 * self.n;
        DMatrix::from_fn(m, m, |r, c| self.entry(r, c).eval(x))
    }

    /// One-based `(block, k, j)` positions that the structure allows to be nonzero.
    pub fn allowed_positions(n: usize) -> Vec<(Block, usize, usize)> {
        let mut out = Vec::new();
        for b in Block::ALL {
            for k in 1..=n {
                for j in 1..=n {
                    if b.potential_allows(n, k, j) {
                        out.push((b, k, j));
                    }
                }
            }
        }
        out
    }

    fn check_shape(&self) -> Result<()> {
        let ok = |blk: &Vec<Vec<ScalarProfile>>| blk.len() == self.n && blk.iter().all(|row| row.len() == self.n);
        if self.n == 0 || !(ok(&self.q11) && ok(&self.q12) && ok(&self.q21) && ok(&self.q22)) {
            return Err(IspError::InvalidPotential(format!("blocks must be {0} x {0}", self.n)));
        }
        if !(self.envelope.c > 0.0 && self.envelope.eps > 0.0) {
            return Err(IspError::InvalidPotential("envelope constants must be positive".into()));
        }
        Ok(())
    }

    /// Ok when shapes are consistent and [`validate_potential`] finds nothing.
    pub fn ensure_valid(&self) -> Result<()> {
        self.check_shape()?;
        let report = validate_potential(self);
        if let Some(v) = report.violations.first() {
            return Err(IspError::InvalidPotential(v.to_string()));
        }
        Ok(())
    }
}

/// What went wrong at one potential entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Nonzero where the block structure forces zero.
    Structure { rule: String },
    /// `|q(x)| > C e^{-eps x}` at the reported point.
    Envelope { x: f64, value: f64, bound: f64 },
    /// Representation invariant of the profile itself.
    Profile { detail: String },
}

/// A single violation, with one-based `(k, j)` inside `block`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub block: Block,
    pub k: usize,
    pub j: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = format!("q{}({},{})", self.block.label(), self.k, self.j);
        match &self.kind {
            ViolationKind::Structure { rule } => write!(f, "{name} must vanish ({rule})"),
            ViolationKind::Envelope { x, value, bound } => {
                write!(f, "{name} exceeds the envelope at x = {x}: {value:e} > {bound:e}")
            }
            ViolationKind::Profile { detail } => write!(f, "{name}: {detail}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks block structure, profile invariants and the exponential envelope.
/// Shape errors (wrong block sizes) are reported as structure violations on
/// the missing entries.
pub fn validate_potential(pot: &MCanonicalPotential) -> ValidationReport {
    let n = pot.n;
    let env = pot.envelope;
    let x_end = if env.c > 0.0 && env.eps > 0.0 {
        env.truncation(TAIL_TOL)
    } else {
        1.0
    };
    let probes: Vec<f64> = (0..=400).map(|m| x_end * m as f64 / 400.0).collect();
    let mut violations = Vec::new();
    for b in Block::ALL {
        let blk = pot.block(b);
        for k in 1..=n {
            for j in 1..=n {
                let Some(profile) = blk.get(k - 1).and_then(|row| row.get(j - 1)) else {
                    violations.push(Violation {
                        block: b,
                        k,
                        j,
                        kind: ViolationKind::Profile { detail: "missing entry".into() },
                    });
                    continue;
                };
                if let Err(e) = profile.check() {
                    violations.push(Violation {
                        block: b,
                        k,
                        j,
                        kind: ViolationKind::Profile { detail: e.to_string() },
                    });
                    continue;
                }
                if profile.is_zero() {
                    continue;
                }
                if !b.potential_allows(n, k, j) {
                    violations.push(Violation {
                        block: b,
                        k,
                        j,
                        kind: ViolationKind::Structure { rule: b.rule().into() },
                    });
                    continue;
                }
                let mut extra = Vec::new();
                if let ScalarProfile::Sampled(s) = profile {
                    extra.extend((0..s.values.len()).map(|m| m as f64 * s.dx));
                }
                for &x in probes.iter().chain(extra.iter()) {
                    let value = profile.eval(x).norm();
                    let bound = env.bound(x);
                    if value > bound * (1.0 + 1e-9) + 1e-300 {
                        violations.push(Violation {
                            block: b,
                            k,
                            j,
                            kind: ViolationKind::Envelope { x, value, bound },
                        });
                        break;
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Invertible `n x n` boundary matrix `H` in `y2(0) = H y1(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMatrix {
    h: CMatrix,
    inverse: CMatrix,
}

impl BoundaryMatrix {
    pub fn new(h: CMatrix) -> Result<Self> {
        Self::with_tolerance(h, SINGULARITY_TOL)
    }

    pub fn with_tolerance(h: CMatrix, tol: f64) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() == 0 {
            return Err(IspError::DimensionMismatch("boundary matrix must be square".into()));
        }
        let det_abs = h.determinant().norm();
        if !(det_abs > tol) {
            return Err(IspError::SingularH { det_abs });
        }
        let inverse = h.clone().try_inverse().ok_or(IspError::SingularH { det_abs })?;
        Ok(Self { h, inverse })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CMatrix::identity(n, n)).expect("identity is invertible")
    }

    pub fn scalar(h: C64) -> Result<Self> {
        Self::new(CMatrix::from_element(1, 1, h))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.h
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }
}

impl Serialize for BoundaryMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<C64>> = (0..self.h.nrows())
            .map(|r| (0..self.h.ncols()).map(|c| self.h[(r, c)]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundaryMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<C64>> = Vec::deserialize(d)?;
        let m = matrix_from_rows(&rows).map_err(serde::de::Error::custom)?;
        BoundaryMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Dense matrix from nested rows; errors on ragged input.
pub fn matrix_from_rows(rows: &[Vec<C64>]) -> Result<CMatrix> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if nr == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(IspError::DimensionMismatch("matrix rows must be nonempty and equally long".into()));
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

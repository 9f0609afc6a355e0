use thiserror::Error;

pub type Result<T> = std::result::Result<T, IspError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IspError {
    #[error("invalid dispersion: {0}")]
    InvalidDispersion(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("boundary matrix is singular (|det H| = {det_abs:e})")]
    SingularH { det_abs: f64 },
    #[error("successive approximation did not converge after {sweeps} sweeps (last change {last_change:e})")]
    NonConvergence { sweeps: usize, last_change: f64 },
    #[error("det(I + A_H+) vanishes at lambda = {lambda} (|det| = {det_abs:e})")]
    SingularFactor { lambda: f64, det_abs: f64 },
    #[error("matrix P is not invertible at lambda = {lambda} (|det| = {det_abs:e})")]
    SingularP { lambda: f64, det_abs: f64 },
    #[error("function does not decay at the grid ends (edge residual {residual:e} > {tolerance:e})")]
    EdgeDecayViolation { residual: f64, tolerance: f64 },
    #[error("scattering matrix is singular at lambda = {lambda} (|det| = {det_abs:e})")]
    SingularScattering { lambda: f64, det_abs: f64 },
    #[error("discrete Fredholm system is singular: {detail}")]
    FredholmSingular { detail: String },
    #[error("boundary pair is degenerate (|det(H1 - H2)| = {det_abs:e})")]
    DegenerateBoundaryPair { det_abs: f64 },
    #[error("inputs are inconsistent: {detail}")]
    InconsistentInputs { detail: String },
    #[error("coefficient system is rank deficient (nullity {nullity}, first at s = {s})")]
    RankDeficient { nullity: usize, s: f64 },
}

impl IspError {
    /// Stable identifier used in run reports.
    pub fn name(&self) -> &'static str {
        match self {
            IspError::InvalidDispersion(_) => "InvalidDispersion",
            IspError::InvalidProfile(_) => "InvalidProfile",
            IspError::InvalidPotential(_) => "InvalidPotential",
            IspError::InvalidGrid(_) => "InvalidGrid",
            IspError::DimensionMismatch(_) => "DimensionMismatch",
            IspError::SingularH { .. } => "SingularH",
            IspError::NonConvergence { .. } => "NonConvergence",
            IspError::SingularFactor { .. } => "SingularFactor",
            IspError::SingularP { .. } => "SingularP",
            IspError::EdgeDecayViolation { .. } => "EdgeDecayViolation",
            IspError::SingularScattering { .. } => "SingularScattering",
            IspError::FredholmSingular { .. } => "FredholmSingular",
            IspError::DegenerateBoundaryPair { .. } => "DegenerateBoundaryPair",
            IspError::InconsistentInputs { .. } => "InconsistentInputs",
            IspError::RankDeficient { .. } => "RankDeficient",
        }
    }

    /// True for errors caused by malformed input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            IspError::InvalidDispersion(_)
                | IspError::InvalidProfile(_)
                | IspError::InvalidPotential(_)
                | IspError::InvalidGrid(_)
                | IspError::DimensionMismatch(_)
        )
    }

    /// The spectral or spatial location attached to the failure, if any.
    pub fn location(&self) -> Option<(&'static str, f64)> {
        match self {
            IspError::SingularFactor { lambda, .. }
            | IspError::SingularP { lambda, .. }
            | IspError::SingularScattering { lambda, .. } => Some(("lambda", *lambda)),
            IspError::RankDeficient { s, .. } => Some(("s", *s)),
            _ => None,
        }
    }
}

//! Direct and inverse scattering on the half-axis for first-order `2n x 2n`
//! systems `-i y' + Q(x) y = lambda sigma y` whose potential `Q` has the
//! M-canonical triangular block structure.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: dispersions, scalar profiles, potentials, boundary matrices.
//! - [`line`]: matrix functions sampled on a uniform real `lambda` grid.
//! - [`quad`]: Filon-type quadrature for oscillatory integrals.
//! - [`spectral`]: Cauchy projections, tail models and Fourier inversion on the line.
//! - [`rational`]: exact rational functions used as oracles and for the exact split path.
//! - [`forward`]: bounded solutions, transformation-operator kernels, scattering data.
//! - [`rh`]: additive splitting, the regular Riemann-Hilbert solve and block recovery.
//! - [`example_e1`]: the explicitly solvable first/last-column coupling class.

pub mod domain;
pub mod error;
pub mod example_e1;
pub mod forward;
pub mod gmres;
pub mod line;
pub mod quad;
pub mod rational;
pub mod rh;
pub mod spectral;

pub use domain::{
    theta_exponent, validate_potential, Block, BoundaryMatrix, Dispersion, Envelope, ExpTerm,
    MCanonicalPotential, SampledProfile, ScalarProfile, ValidationReport, Violation,
};
pub use error::{IspError, Result};
pub use line::{Analyticity, LambdaGrid, LineMatrixFunction};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix used for pointwise values.
pub type CMatrix = nalgebra::DMatrix<C64>;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

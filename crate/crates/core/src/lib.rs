//! Spectral simulation and property checks for the conserved density
//! fluctuation SPDE
//!
//! ```text
//! d rho = 1/2 d_s( M(rho) d_s mu ) dt - alpha d_s^4 rho dt + d_s( amplitude dW ),
//! mu    = V'(rho) (+ C),
//! ```
//!
//! on the reference interval `[0, 1]` with zero Neumann conditions.
//!
//! * [`spectral`]: cosine basis, transforms, differential operators, `H^-1` geometry.
//! * [`model`]: potentials (singular, regularized, polynomial), mobility, drift, energy.
//! * [`noise`]: Wiener increments in conservative divergence form.
//! * [`integrator`]: semi-implicit Euler-Maruyama stepping, penalty reflection,
//!   monitors and the moving-boundary diagnostic.
//! * [`analysis`]: assumption checkers, contraction and mixing experiments,
//!   Gaussian reference, pCN Gibbs sampler, measure comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod integrator;
pub mod model;
pub mod noise;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{Simulation, StepperConfig, Trajectory};
pub use model::{Mobility, Model, PotentialFamily, PotentialSpec, RegularizedBase};
pub use noise::{Amplitude, NoiseKind, NoiseSpec};
pub use spectral::{DensityField, SpectralBasis};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Simulation and verification toolkit for the zero-range process evolving in
//! a symmetric random conductance environment on the discrete torus.
//!
//! The crate is organized around the full verification pipeline:
//!
//! * [`lattice`] — torus geometry, discrete function spaces and the
//!   interpolation operators linking grid functions to `U^d = [-1,1]^d`.
//! * [`environment`] — symmetric random bond conductances with ellipticity
//!   certificates, and the induced jump rates.
//! * [`measures`] — the interaction rate `g`, fugacity/partition machinery,
//!   exact product-measure samplers and canonical-ensemble comparisons.
//! * [`dynamics`] — exact event-driven simulation of the particle system,
//!   the monotone coupling, and detailed-balance diagnostics.
//! * [`resolvent`] — the weighted graph Laplacian, conjugate-gradient
//!   resolvent solves and corrected test functions.
//! * [`homogenization`] — effective diffusion matrix via the periodic
//!   corrector problem.
//! * [`pde`] — finite-volume solver for the nonlinear diffusion equation,
//!   weak-solution residuals and the constant-coefficient semigroup.
//! * [`fields`] — empirical measures, fluctuation fields, Dynkin martingales
//!   with quadratic variation, and the projection statistics used by the
//!   fluctuation and Boltzmann-Gibbs experiments.
//!
//! Everything is deterministic given explicit 64-bit seeds; parallel callers
//! derive independent streams through [`seeding`].

pub mod dynamics;
pub mod environment;
pub mod error;
pub mod fields;
pub mod homogenization;
pub mod lattice;
pub mod measures;
pub mod pde;
pub mod resolvent;
pub mod seeding;
pub mod testfn;

pub use error::{Error, Result};

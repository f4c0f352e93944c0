//! Identification of mass-action kinetic systems from time series and
//! computation of every reaction network structure that is dynamically
//! equivalent to the identified model within a parameter uncertainty region.
//!
//! The crate is organised along the data flow:
//!
//! * [`kinetic`]: complexes, kinetic systems, Kirchhoff matrices, simulation.
//! * [`conic`]: a small primal-dual interior-point solver for linear and
//!   second-order-cone programs.
//! * [`realization`]: dense (maximal-support) realizations of exact and
//!   uncertain kinetic systems.
//! * [`enumeration`]: the complete set of structurally distinct realizations.
//! * [`estimation`]: least squares and sparse Bayesian learning of the
//!   coefficient matrix, and the resulting confidence ellipsoid.
//! * [`pipeline`]: data generation, end-to-end runs, noise sweeps and DOT export.

pub mod benchmark;
pub mod conic;
pub mod enumeration;
mod error;
pub mod estimation;
pub mod kinetic;
pub mod pipeline;
pub mod realization;

pub use error::{Error, Result};

/// Rate coefficients at or below this value are treated as absent reactions.
pub const SUPPORT_EPS: f64 = 1e-6;

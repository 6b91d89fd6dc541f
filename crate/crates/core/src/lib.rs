#![no_std]
//! Identification of reporting delays in epidemic surveillance data.
//!
//! The crate models infection pressure in a delayed SIRD system as a convex
//! combination of lagged infected counts, `C(t) = Σ_j w_j · i(t − σ_j)`, and
//! recovers the weights `w` from measured series by simplex-constrained least
//! squares. Rates are drawn from Gaussian distributions and the fit is repeated
//! over many draws to obtain weight frequencies, weight means and error bands.
//!
//! Everything here is pure computation over `alloc` collections: file formats,
//! the thread pool and the command line live in the `delayfit` crate.
//!
//! Module map:
//!
//! - [`model`]: kernel, contact-rate schedule, vector field, stability margin.
//! - [`dde`]: adaptive Bogacki–Shampine integrator with Hermite dense output.
//! - [`series`]: measured series, fitting windows, data-driven history.
//! - [`calibrate`]: simulation at data days, the objective, simplex
//!   projection and damped Gauss–Newton fitting on the simplex.
//! - [`ensemble`]: seeded parameter sampling, per-run records and aggregates.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibrate;
pub mod dde;
pub mod ensemble;
mod error;
pub(crate) mod math;
pub mod model;
pub mod series;

pub use error::{Error, Result};

//! Numerical laboratory for blow-up bubble solutions of the
//! Einstein–Lichnerowicz equation
//! `Δ_g u + h u = f u^{2*-1} + π² η_ε(u)^{-2*-1}` on the round sphere `S^n`.
//!
//! * [`model`]: dimensional constants, base data, perturbation schedules.
//! * [`profiles`]: bumps, coefficients, bubbles and kernel elements.
//! * [`energy`]: the functional, the reduced energy and its expansion.
//! * [`reduced`]: the limit reduced energy `H(t, p)` and its critical point.
//! * [`solver`]: radial discretization, Newton, deflation, spectra, families.

// NaN must fail range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod grid;
pub mod model;
pub mod par;
pub mod profiles;
pub mod quadrature;
pub mod reduced;
pub mod roots;
pub mod solver;
pub mod tridiag;

pub use error::{Error, Result};

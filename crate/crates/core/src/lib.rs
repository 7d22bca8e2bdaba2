//! Pseudo-spectral simulation of the kinematic induction equation on the unit
//! 3-torus, together with the operator analysis and greedy control synthesis
//! needed to build a single velocity field that drives exponential magnetic
//! growth at several diffusivities at once.
//!
//! Layering, bottom to top:
//!
//! * [`spectral`] — truncated Fourier fields, transforms, norms, projection.
//! * [`flow`] — finite-mode time-dependent velocity fields and the flow library.
//! * [`solver`] — Strang-split exact-diffusion / RK4 integrator and its transpose.
//! * [`bessel`], [`eigen`] — special functions and 3×3 spectral data.
//! * [`operator`] — Fourier matrix elements, translation identities, controls.
//! * [`diagnostics`] — energy and unique-continuation margins.
//! * [`controller`] — growth, transitive and idle segments; the multi-κ schedule.

pub mod bessel;
pub mod controller;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod flow;
pub mod operator;
pub mod par;
pub mod rotation;
pub mod solver;
pub mod spectral;

pub use error::{DynamoError, Result};

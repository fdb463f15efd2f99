//! Numerical laboratory for multiple-valued variational calculus.
//!
//! Unordered Q-tuples and their metric, piecewise-affine Q-valued fields on
//! cube meshes, Q-integrand energies, minors and graph currents, convexity
//! tests and equi-integrability diagnostics.

pub mod assignment;
pub mod convexity_lab;
pub mod currents;
pub mod equiint;
pub mod error;
pub mod integrands;
pub mod mesh;
pub mod minors;
mod par;
pub mod qfield;
pub mod qspace;
pub mod quadrature;
pub mod rng;

pub use error::{QvarError, Result};

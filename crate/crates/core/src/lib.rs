//! Joint channel estimation and data detection for large SIMO uplinks.
//!
//! The crate implements the projection-onto-convex-hull solver (exact and
//! Neumann-approximated preprocessing), the classical reference detectors and
//! an exhaustive maximum-likelihood oracle, a bit-exact model of the
//! fixed-point processing-element array, and a seeded Monte-Carlo harness.

pub mod baselines;
pub mod error;
pub mod fxp;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, C64};

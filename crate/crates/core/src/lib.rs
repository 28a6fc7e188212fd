//! Double-free-boundary Bernoulli solver on periodic strips and annuli.
//!
//! Given positive flow-speed fields `a1`, `a2` on a P-periodic strip, the
//! crate computes boundary-curve pairs whose capacitary potential satisfies
//! `|grad U| = lambda_i * a_i` on each boundary, by a monotone
//! trial-free-boundary operator iteration, together with reduced models,
//! diagnostics, and lambda-continuation.
//!
//! All numerical kernels are generic over the scalar type via
//! [`scalar::Real`]; the crate root exports `f64` aliases used by the CLI
//! and most tests.

pub mod annulus;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod geom;
mod grid;
pub mod iterate;
pub mod potential;
pub mod reduced;
pub mod scalar;
pub mod trial_ops;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 aliases for the core domain types.
pub type Point2 = geom::Point2<f64>;
pub type PeriodicArc = geom::PeriodicArc<f64>;
pub type ArcPair = geom::ArcPair<f64>;














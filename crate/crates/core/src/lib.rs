//! Numerical laboratory for semi-invertible matrix cocycles over symbolic
//! dynamics: Lyapunov exponents, Oseledets data, Lyapunov norms, and
//! periodic-orbit approximation of the exceptional spectrum.

pub mod applications;
pub mod cli;
pub mod cocycle;
pub mod error;
pub mod lyapnorm;
pub mod oseledets;
pub mod periodic_approx;
pub mod scalar;
pub mod seed;
pub mod symbolic;
pub mod transferop;

pub use cocycle::NEG_INF_FLOOR;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete double-precision generator, the default throughout the CLI.
pub type Cocycle = cocycle::CocycleGenerator<f64>;

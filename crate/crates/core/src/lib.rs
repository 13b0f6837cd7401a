//! Spectral laboratory for the damped wave equation
//! `∂ₜ²u − Δu + ∂ₜu = 𝒩(u)` on periodic boxes in one to three dimensions.
//!
//! The numerical core is generic over the floating-point type ([`Real`]) and
//! exponent bookkeeping over [`Exact`], which admits rationals. The aliases
//! below fix the scalar to `f64` (and `BigRational` for exact exponents).

pub mod blowup;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimates;
pub mod scalar;
pub mod grid;
pub mod kernel;
pub mod nonlinear;
pub mod propagators;
pub mod report;
pub mod symbols;

pub use error::{Error, Result};
pub use scalar::{Exact, Real};

/// Double-precision grid.
pub type Grid64 = grid::GridSpec<f64>;
/// Double-precision field.
pub type Field64 = grid::Field<f64>;
/// Double-precision Cauchy data.
pub type PairState64 = propagators::PairState<f64>;
/// Parameter set with floating-point exponents.
pub type Params64 = estimates::EstimateParams<f64>;
/// Parameter set with exact rational exponents.
pub type RationalParams = estimates::EstimateParams<num_rational::BigRational>;

//! Exact finite-depth construction of Pettis integrable step functions whose
//! primitives are nowhere differentiable, with checkers for every estimate the
//! construction relies on.
//!
//! Scalars are exact rationals throughout. Coefficients that carry a factor
//! `2^{-k/2}` are stored as signed squares, so every norm in the Hilbert
//! space pipeline is an exact rational.

pub mod backend;
pub mod carving;
pub mod dyadic;
pub mod error;
pub mod eval;
pub mod family;
pub mod stepfun;
pub mod verify;

pub use error::{Error, Result};

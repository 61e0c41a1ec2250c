//! Operator-adapted BMO seminorms, heat kernels of Laplacians with
//! Dirichlet, Neumann and glued boundary conditions, and the fractional
//! and imaginary powers built from them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counterexample;
pub mod cubes;
pub mod error;
pub mod frac;
pub mod functions;
pub mod grid;
pub mod kernels;
pub mod mellin;
pub mod multipliers;
pub mod quad;
pub mod seminorm;
pub mod spectral;

pub use error::{Error, Result};

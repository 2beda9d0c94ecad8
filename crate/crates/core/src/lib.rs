//! Transition kernels and two-time joint laws of self-adjoint and unitary
//! non-commutative processes, computed with free and bi-free transforms.
//!
//! The crate is organised bottom-up:
//!
//! * [`measures`]: one-variable laws on the line and on the circle;
//! * [`cumulants`]: exact non-crossing moment/cumulant combinatorics;
//! * [`transforms1d`]: Cauchy, R, ψ, η and S transforms, free convolutions
//!   and one-variable density recovery;
//! * [`additive2d`]: two-variable Green's functions, bi-free additive
//!   convolution and two-variable Stieltjes inversion;
//! * [`multiplicative2d`]: two-variable ψ/H/g transforms, the opposite
//!   partial S-transform and torus Poisson recovery;
//! * [`cli`] and [`verify`]: the command-line front end and its checks.

// Negated range checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod additive2d;
pub mod cli;
pub mod cumulants;
pub mod error;
pub mod transforms1d;
pub mod grid;
pub mod measures;
pub mod multiplicative2d;
pub mod verify;

pub use error::{Error, Result};

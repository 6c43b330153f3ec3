//! Numerical laboratory for regularisation by noise.
//!
//! The crate is `no_std` (with `alloc`) and contains only the pure numerical
//! kernels: grids and Besov-type estimators, exact fractional Brownian motion
//! samplers, fractional calculus, the averaging operator `T^w b`, sewing and
//! nonlinear Young integration, Young ODE flows, and transport/continuity
//! equations along perturbed characteristics. IO, configuration and the
//! experiment harness live in the `regnoise-lab` crate.
//!
//! Everything is deterministic: random numbers come from a counter-based
//! generator keyed by `(seed, stream, index)` ([`rng::CounterRng`]), so the
//! same inputs give bit-identical outputs regardless of how callers schedule
//! work.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::manual_range_contains,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::manual_div_ceil
)]

extern crate alloc;

pub mod averaging;
pub mod error;
pub mod fft;
pub mod fracalc;
pub mod gaussian;
pub mod gridcore;
pub mod math;
pub mod pde;
pub mod rng;
pub mod stats;
pub mod yde;
pub mod young;

pub use error::{Error, Result};

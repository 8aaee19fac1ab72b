//! Numerics for continuous-time quantum measurement: a-posteriori states
//! under counting and diffusive detection, a-priori master equations,
//! characteristic operators, closed-form oracles and the counting-to-diffusion
//! scaling limit.
//!
//! The crate is `no_std` with `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod charfun;
pub mod counting;
pub mod diffusive;
pub mod error;
pub mod hilbert;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

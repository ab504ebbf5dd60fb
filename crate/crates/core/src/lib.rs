//! Direct localization of a narrowband radio source from snapshots taken at
//! several distributed antenna arrays.
//!
//! The crate is `no_std` (it needs `alloc`) and carries the full numerical
//! pipeline: geometry and grids, array responses, pulse synthesis and matched
//! filtering, a clustered multipath channel generator, threshold-based timing,
//! the group-sparse recovery problem and its solver, the multi-pass localizer
//! with grid refinement, and the two-step baselines used for comparison.
//!
//! File formats, configuration, the Monte-Carlo harness and the command line
//! live in the companion `disoul` crate.

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod arrays;
pub mod baselines;
pub mod channel;
mod error;
pub mod geometry;
pub mod localizer;
pub mod rng;
pub mod sparse;
pub mod stats;
pub mod timing;
pub mod waveform;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;

/// Propagation speed, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

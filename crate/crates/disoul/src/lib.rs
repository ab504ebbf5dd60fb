//! Scenario files, seeded Monte-Carlo trials and sweeps, text and binary
//! dumps, a conic reference solver and the acceptance checks behind the
//! `disoul` command line.
//!
//! The numerics live in [`disoul_core`]; this crate adds everything that
//! needs `std`.

// Range checks use `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
mod error;
pub mod harness;
pub mod io;
pub mod reference;
pub mod weight;

pub use error::Error;

//! Range-based random polymers: lattice sampling, exact oracles, continuum
//! kernels, Wiener-chaos evaluation and the one-dimensional Brownian model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod bm_range;
pub mod chaos;
pub mod disorder;
pub mod error;
pub mod harness;
pub mod kpoint;
pub mod lattice;
pub mod par;
pub mod polymer;
pub mod quad;
pub mod rng;
pub mod series;
pub mod special;
pub mod stats;

pub use error::{RclError, Result};

//! Grant-free non-coherent index-modulation access: signal model, the
//! space-time-frequency and angular-domain AMP detectors, baselines and
//! metrics.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod ae;
pub mod amp;
pub mod baselines;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod mat;
pub mod metrics;
pub mod rng;
pub mod signal;
pub mod special;
pub mod stf;

pub use error::{Error, Result};

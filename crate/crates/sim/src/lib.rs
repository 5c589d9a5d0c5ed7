//! Monte Carlo harness for the ncim detectors: configuration, figure presets,
//! seeded parallel sweeps and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod presets;
pub mod trial;

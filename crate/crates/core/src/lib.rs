//! Backstepping boundary control of large-scale `n+1` hyperbolic systems,
//! with continuum kernel approximations of the feedback gains.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod continuum;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod io;
pub mod kernels;
pub mod params;
pub mod plot;
pub mod simulate;

pub use error::{Error, Result};

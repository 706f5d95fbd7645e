//! Traffic waves in pure adaptive-cruise-control traffic: platoon simulation,
//! characteristic and shock tracking, and a congested-regime continuum solver.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod micro;
pub mod model;
pub mod pde;
pub mod signal;
pub mod tracker;
pub mod wave;

pub use error::{Error, Result};

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ann;
pub mod atmosphere;
pub mod combustor;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod inlet;
pub mod plot;
pub mod rcac;
pub mod thermo;

pub use error::{Error, Result};

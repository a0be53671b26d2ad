#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod functionals;
pub mod processes;
pub mod rng;

pub use error::{Error, Result};

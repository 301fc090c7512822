#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod data;
pub mod diff;
pub mod eval;
pub mod experiment;
pub mod error;
pub mod losses;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

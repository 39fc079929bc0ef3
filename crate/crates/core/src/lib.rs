#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod noise;
pub mod sap;

pub use error::{Error, Result};

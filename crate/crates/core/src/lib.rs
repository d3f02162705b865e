#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod geometry;
mod linalg;
pub mod maps;
pub mod regularity;
pub mod sensitivity;
pub mod serde_ext;
pub mod slopes;
pub mod solvers;

pub use error::{Error, Result};

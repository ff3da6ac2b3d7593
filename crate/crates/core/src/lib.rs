//! Two-dimensional level-set topology optimization with an auxiliary
//! projected density field.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod driver;
pub mod error;
pub mod fem;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod material;
pub mod mma;
pub mod par;
pub mod penalties;
pub mod schedule;

pub use error::{Error, Result};

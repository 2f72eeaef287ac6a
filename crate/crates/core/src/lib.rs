//! Unbalanced optimal transport with transport and mass creation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod error;
pub mod flow;
pub mod grid;
pub mod measures;
pub mod otto;
mod par;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod error_terms;
pub mod fit;
pub mod fock;
pub mod grid;
pub mod hartree;
pub mod kernel;
pub mod linalg;
pub mod modes;
pub mod pair;
pub mod random;
pub mod run;

pub use error::{Error, Result};

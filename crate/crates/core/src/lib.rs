//! Power-grid false data injection against neural detectors.
//!
//! The crate covers DC state estimation with residual bad-data detection,
//! stealthy false data injection, a from-scratch MLP detector, a
//! constrained white-box attack against it and four defenses, plus the
//! dataset and metric harness used to evaluate them.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod defense;
pub mod error;
pub mod estimation;
pub mod fdia;
pub mod fixtures;
pub mod grid;
pub mod harness;
pub mod neural;
pub mod rng;

pub use error::{Error, Result};

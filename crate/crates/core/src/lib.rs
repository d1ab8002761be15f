// NaN must fail validation, so `!(x > 0.0)` is used on purpose throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clarity;
pub mod config;
pub mod control;
pub mod ergodic;
pub mod error;
pub mod eware;
pub mod experiment;
pub mod grid;
pub mod mission;
pub mod tisd;
pub mod trajectory;
pub mod vehicle;

pub use error::{Error, Result};

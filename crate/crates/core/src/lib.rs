// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod contract;
pub mod error;
pub mod first_best;
pub mod general_fb;
pub mod model;
pub mod monte_carlo;
pub mod optimize;
pub mod output;
pub mod quadrature;
pub mod second_best;
pub mod verification;

pub use error::{Error, Result};

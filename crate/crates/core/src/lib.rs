//! Exceedances of large kth-nearest-neighbor ball contents.
//!
//! For `n` i.i.d. points with a bounded density on `[0,1]^d`, this crate
//! counts the points whose kth-nearest-neighbor ball carries probability
//! above `v_{n,k}(t)`, computes that count's exact expectation, and runs
//! replicated simulations comparing it with `Po(e^{-t})` and the centered
//! maximum content with the Gumbel law.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chenstein;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod limits;
pub mod measures;
pub mod nn;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};

//! Missing-value imputation for mixed numerical/categorical tables with deep
//! generative models (GAIN and VAE, optionally with per-variable input and
//! output splitting), plus the MCAR amputation and RMSE evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod batching;
pub mod diffcore;
pub mod error;
pub mod gain;
pub mod harness;
pub mod hyper;
pub mod metrics;
pub mod vae;

pub use error::{Error, Result};
pub mod netblocks;
pub mod rng;
pub mod tabular;

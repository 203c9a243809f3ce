// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod image;
pub mod landmarks;
pub mod manifest;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod registration;
pub mod transform;

pub use error::{Error, Result};

//! Integral-histogram tensors, spatially weighted local histograms,
//! likelihood maps, motion detection and the SPCT single-object tracker.

// argument checks are written `!(x > lo)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod integral;
pub mod likelihood;
pub mod motion;
pub mod pipeline;
pub mod swih;
pub mod tracker;

pub use error::{Error, Result};

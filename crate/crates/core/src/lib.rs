//! Single-image dehazing.
//!
//! The pipeline estimates a coarse transmission map from the dark channel,
//! propagates reliable transmission values through an exact nearest-neighbor
//! search in a joint color/position space, fits color lines in image patches
//! to recover the airlight direction and per-pixel airlight magnitude,
//! interpolates that magnitude with a Laplacian-regularized linear system,
//! and finally removes the airlight to recover scene radiance.
//!
//! A forward haze model ([`synthesis`]) and a quality-metric suite
//! ([`metrics`]) make the whole pipeline testable on generated scenes.

// `!(x >= lo)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod airlight;
pub mod color_line;
pub mod config;
pub mod dark_channel;
pub mod error;
pub mod image;
pub mod io;
pub mod kdtree;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod recovery;
pub mod regularization;
pub mod synthesis;

pub use error::{Error, Result};
pub use image::{Image, Rgb, ScalarMap};

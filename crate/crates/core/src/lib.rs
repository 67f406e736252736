//! Building blocks for a highlight-moment dataset pipeline.
//!
//! The crate localizes highlight reels inside full-game recordings using
//! hierarchical multi-scale SSIM matching, samples duration-matched
//! non-important segments, assembles labeled moment records, and provides
//! the analysis stack used on model outputs (classification metrics with
//! bootstrap intervals, modality contribution scores) together with simple
//! unimodal logistic-regression baselines.

// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod extractor;
pub mod localizer;
pub mod media;
pub mod sampler;
pub mod ssim;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{FrameSpan, GrayFrame, Rational, TimeSpan};

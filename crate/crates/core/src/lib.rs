//! Core numerics for RGB-D salient object detection: a dense f64 tensor
//! engine with reverse-mode automatic differentiation, the nested dual
//! attention and adjacent aggregation blocks, the hybrid saliency losses,
//! the full two-stream network, and the saliency evaluation metrics.
//!
//! The crate is `no_std` + `alloc`; everything IO-related lives in the
//! companion `sod-cli` crate.

#![no_std]

extern crate alloc;

pub mod aiam;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod ndam;
pub mod network;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

//! Recurrent regression tracking of generic objects.
//!
//! A small differentiable tensor engine drives a twin-stream convolutional
//! embedding with skip connections, a two-layer peephole LSTM and a corner
//! regression head. Around it sit the crop geometry, a synthetic sequence
//! generator, the curriculum trainer, a streaming tracker and evaluation
//! metrics. The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod network;
pub mod synthgen;
pub mod tensor;
pub mod tracker;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, CropFrameBox, CropWindow};
pub use image::Image;
pub use tensor::Tensor;

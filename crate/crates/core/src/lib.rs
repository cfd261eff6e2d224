//! Spatial-temporal graph convolutional refinement of 3D human pose
//! sequences.
//!
//! The crate is organized bottom-up:
//!
//! - [`skeleton`]: kinematic tree, mirror pairs and bones.
//! - [`graph`]: the space-time graph over `T` frames and its six neighbor
//!   classes, with normalized class matrices and the graph convolutions.
//! - [`tensor`]: dense tensors with reverse-mode differentiation.
//! - [`model`]: the refiner network (ST-GCN layers, non-local block, head)
//!   and its checkpoint format.
//! - [`train`]: losses, AMSGrad, learning-rate schedule and training loop.
//! - [`data`]: cameras, occluders, the synthetic motion generator, the
//!   corruption model, windowing and the on-disk dataset layout.
//! - [`eval`]: MPJPE and per-action reports.
//! - [`cli`]: the `stgcn-refine` command line.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod skeleton;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

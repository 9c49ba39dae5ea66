//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! Graphs are built eagerly: every op returns a [`Tensor`] that remembers its
//! parents when any of them tracks gradients, and [`Tensor::backward`] walks
//! that graph once in reverse topological order. Ops reject non-finite
//! results instead of letting NaN or Inf propagate.

pub mod checkpoint;
mod error;
pub mod ops;
mod optim;
mod scalar;
mod tensor;

pub use error::{AutogradError, Result};
pub use ops::conv::{conv2d, conv_transpose2d};
pub use ops::elementwise::{elementwise, Elementwise};
pub use ops::pool::{pool2d, PoolKind};
pub use ops::reduce::softmax;
pub use ops::shape::{concat_channels, resize_bilinear};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tensor::{ComputationNode, Tensor};

//! Desk-scale light-field super-resolution built around an omnidirectional
//! EPI transformer: a small autodiff tensor engine, the 4D light-field
//! geometry, the model blocks, and the training/inference/evaluation stack.
//! No external ML framework; f64 doubles as the checked oracle precision.

pub mod blocks;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::autodiff::{backward, no_grad, Gradients};
pub use tensor::ops::resample::Scale;
pub use tensor::{DType, Elem, SoftmaxMask, Tensor};

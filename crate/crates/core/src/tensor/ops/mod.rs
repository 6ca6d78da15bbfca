//! Differentiable op kernels. Each op validates shapes (and, in checked
//! mode, input finiteness), computes the forward value, and attaches a
//! backward closure that maps the output gradient to per-parent gradients.

pub mod conv;
pub mod elementwise;
pub mod layout;
pub mod matmul;
pub mod norm;
pub mod reduce;
pub mod resample;

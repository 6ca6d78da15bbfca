//! Parameterized primitives shared by the transformer blocks.
//!
//! Every weight is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with the
//! caller's RNG; biases start at zero. Construction order is therefore part
//! of the seeding contract: building the same module twice from RNGs in the
//! same state yields identical parameters.

use rand_chacha::ChaCha8Rng;

use super::{key, ParamVisitor, ParamVisitorMut};
use crate::error::Result;
use crate::tensor::{Elem, Tensor};

/// Dense affine map over the last axis: `(.., in) -> (.., out)`.
pub struct Linear<E: Elem> {
    pub w: Tensor<E>,
    pub b: Tensor<E>,
}

impl<E: Elem> Linear<E> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Tensor::rand_fan_in(&[fan_in, fan_out], fan_in, rng).var(),
            b: Tensor::zeros(&[fan_out]).var(),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.matmul(&self.w)?.add(&self.b)
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        f(&key(prefix, "w"), &self.w);
        f(&key(prefix, "b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        f(&key(prefix, "w"), &mut self.w);
        f(&key(prefix, "b"), &mut self.b);
    }
}

/// Full 3D convolution wrapper, `(B,Ci,D,H,W) -> (B,Co,D,H,W)`.
pub struct Conv3dLayer<E: Elem> {
    pub w: Tensor<E>,
    pub b: Tensor<E>,
    pub dilation: [usize; 3],
}

impl<E: Elem> Conv3dLayer<E> {
    pub fn new(
        c_out: usize,
        c_in: usize,
        kernel: [usize; 3],
        dilation: [usize; 3],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = c_in * kernel[0] * kernel[1] * kernel[2];
        Conv3dLayer {
            w: Tensor::rand_fan_in(&[c_out, c_in, kernel[0], kernel[1], kernel[2]], fan_in, rng)
                .var(),
            b: Tensor::zeros(&[c_out]).var(),
            dilation,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.conv3d(&self.w, Some(&self.b), self.dilation)
    }

    /// Clears both weight and bias; the layer then maps everything to zero.
    pub fn zero(&mut self) {
        self.w
            .set_data(vec![E::from_f64(0.0); self.w.numel()])
            .expect("parameter tensors are leaves");
        self.b
            .set_data(vec![E::from_f64(0.0); self.b.numel()])
            .expect("parameter tensors are leaves");
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        f(&key(prefix, "w"), &self.w);
        f(&key(prefix, "b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        f(&key(prefix, "w"), &mut self.w);
        f(&key(prefix, "b"), &mut self.b);
    }
}

/// Depthwise 2D convolution wrapper, `(N,C,P,Q) -> (N,C,P,Q)`.
pub struct DwConv2dLayer<E: Elem> {
    pub w: Tensor<E>,
    pub b: Tensor<E>,
}

impl<E: Elem> DwConv2dLayer<E> {
    pub fn new(channels: usize, kernel: [usize; 2], rng: &mut ChaCha8Rng) -> Self {
        let fan_in = kernel[0] * kernel[1];
        DwConv2dLayer {
            w: Tensor::rand_fan_in(&[channels, kernel[0], kernel[1]], fan_in, rng).var(),
            b: Tensor::zeros(&[channels]).var(),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.dwconv2d(&self.w, Some(&self.b))
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        f(&key(prefix, "w"), &self.w);
        f(&key(prefix, "b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        f(&key(prefix, "w"), &mut self.w);
        f(&key(prefix, "b"), &mut self.b);
    }
}

/// Layer norm over one axis with learned gain (ones) and shift (zeros).
pub struct LayerNormLayer<E: Elem> {
    pub g: Tensor<E>,
    pub b: Tensor<E>,
}

impl<E: Elem> LayerNormLayer<E> {
    pub fn new(dim: usize) -> Self {
        LayerNormLayer {
            g: Tensor::ones(&[dim]).var(),
            b: Tensor::zeros(&[dim]).var(),
        }
    }

    pub fn forward(&self, x: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        x.layer_norm(&self.g, &self.b, axis, 1e-5)
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        f(&key(prefix, "g"), &self.g);
        f(&key(prefix, "b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        f(&key(prefix, "g"), &mut self.g);
        f(&key(prefix, "b"), &mut self.b);
    }
}

/// Learned per-channel residual gain, initialized to a small constant so a
/// fresh block starts close to the identity.
pub struct LayerScale<E: Elem> {
    pub gamma: Tensor<E>,
}

impl<E: Elem> LayerScale<E> {
    pub fn new(dim: usize, init: f64) -> Self {
        LayerScale {
            gamma: Tensor::full(E::from_f64(init), &[dim]).var(),
        }
    }

    /// Scales the trailing channel axis of `(.., C)` tokens.
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.mul(&self.gamma)
    }

    pub fn zero(&mut self) {
        self.gamma
            .set_data(vec![E::from_f64(0.0); self.gamma.numel()])
            .expect("parameter tensors are leaves");
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        f(&key(prefix, "gamma"), &self.gamma);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        f(&key(prefix, "gamma"), &mut self.gamma);
    }
}

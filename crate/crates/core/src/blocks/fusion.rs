//! Adaptive fusion of the three directional feature fields back into one
//! light-field feature tensor.

use rand_chacha::ChaCha8Rng;

use super::layers::{Conv3dLayer, Linear};
use super::{key, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Gate network settings. `reduction` divides the channel count for the
/// bottleneck; `sigmoid` squashes the gates into `(0, 1)` (the compact-model
/// variant), otherwise raw gate values are used directly.
#[derive(Clone, Copy, Debug)]
pub struct FusionConfig {
    pub channels: usize,
    pub reduction: usize,
    pub sigmoid: bool,
    /// Cubic kernel extent of the fusion convolution (1 or 3).
    pub fuse_kernel: usize,
    /// Disables the gate network entirely; branches are summed unweighted.
    pub adaptive: bool,
}

struct GateNet<E: Elem> {
    fc1: Linear<E>,
    fc2: Linear<E>,
    sigmoid: bool,
}

pub struct DirectionalFusion<E: Elem> {
    gate: Option<GateNet<E>>,
    pub conv: Conv3dLayer<E>,
}

impl<E: Elem> DirectionalFusion<E> {
    pub fn new(cfg: &FusionConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.fuse_kernel % 2 == 0 {
            return Err(Error::contract(
                "directional_fusion",
                format!("fusion kernel must be odd, got {}", cfg.fuse_kernel),
            ));
        }
        let c = cfg.channels;
        let gate = if cfg.adaptive {
            let hidden = (c / cfg.reduction).max(1);
            Some(GateNet {
                fc1: Linear::new(c, hidden, rng),
                fc2: Linear::new(hidden, 3 * c, rng),
                sigmoid: cfg.sigmoid,
            })
        } else {
            None
        };
        let k = cfg.fuse_kernel;
        Ok(DirectionalFusion {
            gate,
            conv: Conv3dLayer::new(c, c, [k, k, k], [1, 1, 1], rng),
        })
    }

    /// Fuses three directional fields of shape `(B, C, A, H, W)` and adds the
    /// block input back. Gates are computed from the globally pooled sum of
    /// the branches and applied per channel, one triple per batch element.
    pub fn forward(
        &self,
        fh: &Tensor<E>,
        fv: &Tensor<E>,
        fd: &Tensor<E>,
        fin: &Tensor<E>,
    ) -> Result<Tensor<E>> {
        let sum = fh.add(fv)?.add(fd)?;
        let mixed = match &self.gate {
            Some(gate) => {
                let sh = sum.shape();
                let (b, c) = (sh[0], sh[1]);
                let z = sum.mean_axes(&[2, 3, 4], false)?;
                let mut g = gate.fc2.forward(&gate.fc1.forward(&z)?.gelu()?)?;
                if gate.sigmoid {
                    g = g.sigmoid()?;
                }
                let g = g.reshape(&[b, 3, c, 1, 1, 1])?;
                let pick = |i: usize| -> Result<Tensor<E>> {
                    g.slice(1, i, 1)?.reshape(&[b, c, 1, 1, 1])
                };
                fh.mul(&pick(0)?)?
                    .add(&fv.mul(&pick(1)?)?)?
                    .add(&fd.mul(&pick(2)?)?)?
            }
            None => sum,
        };
        self.conv.forward(&mixed)?.add(fin)
    }

    /// Zeroes the fusion convolution so the module returns `fin` unchanged.
    pub fn zero_output_conv(&mut self) {
        self.conv.zero();
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        if let Some(g) = &self.gate {
            g.fc1.visit(&key(prefix, "gate.fc1"), f);
            g.fc2.visit(&key(prefix, "gate.fc2"), f);
        }
        self.conv.visit(&key(prefix, "conv"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        if let Some(g) = &mut self.gate {
            g.fc1.visit_mut(&key(prefix, "gate.fc1"), f);
            g.fc2.visit_mut(&key(prefix, "gate.fc2"), f);
        }
        self.conv.visit_mut(&key(prefix, "conv"), f);
    }
}

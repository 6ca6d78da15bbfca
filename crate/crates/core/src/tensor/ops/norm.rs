//! Layer normalization over one axis and softmax over the last axis with an
//! optional boolean mask fused in. The mask never materializes -inf logits:
//! disallowed entries are simply excluded from the max/sum, which keeps
//! checked (f64) graphs free of non-finite intermediates.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::shape::{fmt_shape, split_at_axis};
use crate::tensor::{BackwardFn, Elem, Tensor};

/// Boolean attention mask for `softmax_last`. Logits of shape `(..., J, K)`
/// keep entry `(j, k)` iff `allow[j*K + k]`.
#[derive(Clone)]
pub struct SoftmaxMask {
    j: usize,
    k: usize,
    allow: Arc<Vec<bool>>,
}

impl SoftmaxMask {
    pub fn new(j: usize, k: usize, allow: Vec<bool>) -> Result<Self> {
        if allow.len() != j * k {
            return Err(Error::shape(
                "softmax_mask",
                format!("{} flags for a {}x{} mask", allow.len(), j, k),
            ));
        }
        Ok(SoftmaxMask { j, k, allow: Arc::new(allow) })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.j, self.k)
    }

    pub fn allows(&self, j: usize, k: usize) -> bool {
        self.allow[j * self.k + k]
    }
}

impl<E: Elem> Tensor<E> {
    /// Normalizes over `axis` to zero mean and unit variance (biased), then
    /// applies the affine pair `gamma`/`beta` (both shaped `[extent(axis)]`).
    pub fn layer_norm(
        &self,
        gamma: &Tensor<E>,
        beta: &Tensor<E>,
        axis: usize,
        eps: f64,
    ) -> Result<Tensor<E>> {
        Tensor::check_finite("layer_norm", &[self, gamma, beta])?;
        if axis >= self.rank() {
            return Err(Error::shape("layer_norm", format!("axis {} out of range", axis)));
        }
        let c = self.shape()[axis];
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gamma {} / beta {} for extent {}",
                    fmt_shape(gamma.shape()),
                    fmt_shape(beta.shape()),
                    c
                ),
            ));
        }
        let (pre, _, post) = split_at_axis(self.shape(), axis);
        let xd = self.data();
        let gd = gamma.data();
        let bd = beta.data();
        let epse = E::from_f64(eps);
        let cinv = E::from_f64(1.0 / c as f64);

        let rows = pre * post;
        let mut out = vec![E::zero(); xd.len()];
        let mut xhat = vec![E::zero(); xd.len()];
        let mut inv_std = vec![E::zero(); rows];
        for o in 0..pre {
            for i in 0..post {
                let at = |ch: usize| (o * c + ch) * post + i;
                let mut mean = E::zero();
                for ch in 0..c {
                    mean = mean + xd[at(ch)];
                }
                mean = mean * cinv;
                let mut var = E::zero();
                for ch in 0..c {
                    let d = xd[at(ch)] - mean;
                    var = var + d * d;
                }
                var = var * cinv;
                let inv = E::one() / (var + epse).sqrt();
                inv_std[o * post + i] = inv;
                for ch in 0..c {
                    let idx = at(ch);
                    let xh = (xd[idx] - mean) * inv;
                    xhat[idx] = xh;
                    out[idx] = gd[ch] * xh + bd[ch];
                }
            }
        }

        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);
        let g_arc = gamma.data_arc();
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            let dx = needs[0].then(|| {
                let mut dx = vec![E::zero(); xhat.len()];
                for o in 0..pre {
                    for i in 0..post {
                        let at = |ch: usize| (o * c + ch) * post + i;
                        // dxhat = g * gamma; project out mean and the xhat
                        // component to keep the row normalized.
                        let mut m1 = E::zero();
                        let mut m2 = E::zero();
                        for ch in 0..c {
                            let dxh = g[at(ch)] * g_arc[ch];
                            m1 = m1 + dxh;
                            m2 = m2 + dxh * xhat[at(ch)];
                        }
                        m1 = m1 * cinv;
                        m2 = m2 * cinv;
                        let inv = inv_std[o * post + i];
                        for ch in 0..c {
                            let idx = at(ch);
                            let dxh = g[idx] * g_arc[ch];
                            dx[idx] = inv * (dxh - m1 - xhat[idx] * m2);
                        }
                    }
                }
                dx
            });
            let dgamma = needs[1].then(|| {
                let mut dg = vec![E::zero(); c];
                for o in 0..pre {
                    for ch in 0..c {
                        for i in 0..post {
                            let idx = (o * c + ch) * post + i;
                            dg[ch] = dg[ch] + g[idx] * xhat[idx];
                        }
                    }
                }
                dg
            });
            let dbeta = needs[2].then(|| {
                let mut db = vec![E::zero(); c];
                for o in 0..pre {
                    for ch in 0..c {
                        for i in 0..post {
                            db[ch] = db[ch] + g[(o * c + ch) * post + i];
                        }
                    }
                }
                db
            });
            vec![dx, dgamma, dbeta]
        });

        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            backward,
        ))
    }

    /// Softmax over the last axis. With a mask, disallowed entries get weight
    /// exactly zero and take no part in the normalization; a row with no
    /// allowed entry is a contract violation.
    pub fn softmax_last(&self, mask: Option<&SoftmaxMask>) -> Result<Tensor<E>> {
        Tensor::check_finite("softmax_last", &[self])?;
        if self.rank() == 0 {
            return Err(Error::shape("softmax_last", "scalar input"));
        }
        let l = self.shape()[self.rank() - 1];
        let rows = self.numel() / l;
        let j = if let Some(m) = mask {
            let (mj, mk) = m.dims();
            if mk != l || self.rank() < 2 || self.shape()[self.rank() - 2] != mj {
                return Err(Error::shape(
                    "softmax_last",
                    format!("mask {}x{} against logits {}", mj, mk, fmt_shape(self.shape())),
                ));
            }
            mj
        } else {
            1
        };

        let xd = self.data();
        let mut out = vec![E::zero(); xd.len()];
        for r in 0..rows {
            let row = &xd[r * l..(r + 1) * l];
            let orow = &mut out[r * l..(r + 1) * l];
            let allowed = |k: usize| mask.map_or(true, |m| m.allows(r % j, k));
            let mut mx: Option<E> = None;
            for (k, &v) in row.iter().enumerate() {
                if allowed(k) {
                    mx = Some(match mx {
                        Some(m) => m.max(v),
                        None => v,
                    });
                }
            }
            let Some(mx) = mx else {
                return Err(Error::contract("softmax_last", format!("row {} is fully masked", r)));
            };
            let mut sum = E::zero();
            for (k, &v) in row.iter().enumerate() {
                if allowed(k) {
                    let e = (v - mx).exp();
                    orow[k] = e;
                    sum = sum + e;
                }
            }
            let inv = E::one() / sum;
            for v in orow.iter_mut() {
                *v = *v * inv;
            }
        }

        let y_arc = Arc::new(out.clone());
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| {
                let mut dx = vec![E::zero(); y_arc.len()];
                for r in 0..rows {
                    let y = &y_arc[r * l..(r + 1) * l];
                    let gr = &g[r * l..(r + 1) * l];
                    let mut dot = E::zero();
                    for (yv, gv) in y.iter().zip(gr) {
                        dot = dot + *yv * *gv;
                    }
                    for k in 0..l {
                        dx[r * l + k] = y[k] * (gr[k] - dot);
                    }
                }
                dx
            })]
        });

        Ok(Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], backward))
    }
}

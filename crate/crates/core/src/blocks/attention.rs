//! Multi-head self-attention over token sequences, with an optional band
//! restriction along the spatial coordinate of the token grid.

use rand_chacha::ChaCha8Rng;

use super::layers::Linear;
use super::{key, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::tensor::{Elem, SoftmaxMask, Tensor};

pub struct Mhsa<E: Elem> {
    pub wq: Linear<E>,
    pub wk: Linear<E>,
    pub wv: Linear<E>,
    pub wo: Linear<E>,
    heads: usize,
}

impl<E: Elem> Mhsa<E> {
    pub fn new(channels: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::contract(
                "mhsa",
                format!("channels {channels} not divisible by heads {heads}"),
            ));
        }
        Ok(Mhsa {
            wq: Linear::new(channels, channels, rng),
            wk: Linear::new(channels, channels, rng),
            wv: Linear::new(channels, channels, rng),
            wo: Linear::new(channels, channels, rng),
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Attention over `(S, L, C)` tokens. With a mask, disallowed pairs get
    /// exactly zero weight; each query must keep at least one allowed key.
    pub fn forward(&self, tokens: &Tensor<E>, mask: Option<&SoftmaxMask>) -> Result<Tensor<E>> {
        let sh = tokens.shape();
        if sh.len() != 3 {
            return Err(Error::shape(
                "mhsa",
                format!("expected (S, L, C) tokens, got rank {}", sh.len()),
            ));
        }
        let (s, l, c) = (sh[0], sh[1], sh[2]);
        let dh = c / self.heads;
        let split = |t: Tensor<E>| -> Result<Tensor<E>> {
            t.reshape(&[s, l, self.heads, dh])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[s * self.heads, l, dh])
        };
        let scale = 1.0 / (dh as f64).sqrt();
        let q = split(self.wq.forward(tokens)?)?.scale(scale)?;
        let k = split(self.wk.forward(tokens)?)?;
        let v = split(self.wv.forward(tokens)?)?;
        let scores = q.matmul(&k.permute(&[0, 2, 1])?)?;
        let attn = scores.softmax_last(mask)?;
        let ctx = attn
            .matmul(&v)?
            .reshape(&[s, self.heads, l, dh])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[s, l, c])?;
        self.wo.forward(&ctx)
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        self.wq.visit(&key(prefix, "wq"), f);
        self.wk.visit(&key(prefix, "wk"), f);
        self.wv.visit(&key(prefix, "wv"), f);
        self.wo.visit(&key(prefix, "wo"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        self.wq.visit_mut(&key(prefix, "wq"), f);
        self.wk.visit_mut(&key(prefix, "wk"), f);
        self.wv.visit_mut(&key(prefix, "wv"), f);
        self.wo.visit_mut(&key(prefix, "wo"), f);
    }
}

/// Band mask for a `(P, Q)` token grid flattened row-major: token pair
/// `(j, k)` is allowed iff their spatial coordinates (`t % Q`) differ by at
/// most `window`. The angular coordinate never restricts attention.
pub fn band_mask(p: usize, q: usize, window: usize) -> SoftmaxMask {
    let l = p * q;
    let mut allow = vec![false; l * l];
    for j in 0..l {
        let sj = (j % q) as isize;
        for k in 0..l {
            let sk = (k % q) as isize;
            allow[j * l + k] = (sj - sk).abs() <= window as isize;
        }
    }
    SoftmaxMask::new(l, l, allow).expect("band mask table length matches dims")
}

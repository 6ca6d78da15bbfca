//! Transformer building blocks operating on epipolar token sequences.
//!
//! A 5D view tensor `(B, C, S, P, Q)` from the geometry module is flattened
//! to token sequences `(B*S, P*Q, C)` before attention, with token `t`
//! standing for grid position `(t / Q, t % Q)`. All blocks are residual and
//! collapse to the identity when their residual gains and output convolutions
//! are zero, which is the property every end-to-end sanity check leans on.

pub mod attention;
pub mod branch;
pub mod fusion;
pub mod layers;
pub mod omni;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

pub use attention::Mhsa;
pub use branch::{EpiBranch, FfnKind};
pub use fusion::DirectionalFusion;
pub use omni::OmniEpiBlock;

/// Forward-pass mode. Training mode carries the RNG that drives stochastic
/// depth; evaluation is deterministic and never touches an RNG.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Callback receiving every parameter with its hierarchical name.
pub type ParamVisitor<'a, E> = dyn FnMut(&str, &Tensor<E>) + 'a;
/// Mutable variant used by optimizers and checkpoint loading.
pub type ParamVisitorMut<'a, E> = dyn FnMut(&str, &mut Tensor<E>) + 'a;

pub(crate) fn key(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Sequence/grid bookkeeping for one flattened view tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenDims {
    pub b: usize,
    pub c: usize,
    pub s: usize,
    pub p: usize,
    pub q: usize,
}

/// `(B,C,S,P,Q) -> (B*S, P*Q, C)` token flattening.
pub fn view_to_tokens<E: Elem>(view: &Tensor<E>) -> Result<(Tensor<E>, TokenDims)> {
    let sh = view.shape();
    if sh.len() != 5 {
        return Err(Error::shape(
            "view_to_tokens",
            format!("expected rank-5 view tensor, got rank {}", sh.len()),
        ));
    }
    let dims = TokenDims {
        b: sh[0],
        c: sh[1],
        s: sh[2],
        p: sh[3],
        q: sh[4],
    };
    let tokens = view
        .permute(&[0, 2, 3, 4, 1])?
        .reshape(&[dims.b * dims.s, dims.p * dims.q, dims.c])?;
    Ok((tokens, dims))
}

/// Inverse of [`view_to_tokens`] for the same `TokenDims`.
pub fn tokens_to_view<E: Elem>(tokens: &Tensor<E>, dims: TokenDims) -> Result<Tensor<E>> {
    tokens
        .reshape(&[dims.b, dims.s, dims.p, dims.q, dims.c])?
        .permute(&[0, 4, 1, 2, 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_round_trip_is_exact() {
        let n = 2 * 3 * 4 * 2 * 5;
        let x =
            Tensor::<f32>::from_vec((0..n).map(|i| i as f32).collect(), &[2, 3, 4, 2, 5]).unwrap();
        let (tok, dims) = view_to_tokens(&x).unwrap();
        assert_eq!(tok.shape(), &[8, 10, 3]);
        let back = tokens_to_view(&tok, dims).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn token_layout_places_grid_rows_contiguously() {
        // One batch, one channel, one sequence: tokens must read off the grid
        // row-major, i.e. token t holds grid value at (t / Q, t % Q).
        let x = Tensor::<f64>::from_vec((0..6).map(|i| i as f64).collect(), &[1, 1, 1, 2, 3])
            .unwrap();
        let (tok, _) = view_to_tokens(&x).unwrap();
        assert_eq!(tok.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}

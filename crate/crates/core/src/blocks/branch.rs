//! One directional transformer branch: pre-norm attention plus a
//! token-plane feed-forward, both residual with learned gains and
//! per-sequence stochastic depth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::attention::{band_mask, Mhsa};
use super::layers::{DwConv2dLayer, LayerNormLayer, LayerScale, Linear};
use super::{key, Mode, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Feed-forward that mixes tokens spatially: LN, pointwise expansion,
/// 3x3 depthwise convolution over the `(P, Q)` grid, GELU, projection back.
pub struct TpFfn<E: Elem> {
    pub ln: LayerNormLayer<E>,
    pub up: Linear<E>,
    pub dw: DwConv2dLayer<E>,
    pub down: Linear<E>,
}

impl<E: Elem> TpFfn<E> {
    pub fn new(channels: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = channels * ratio;
        TpFfn {
            ln: LayerNormLayer::new(channels),
            up: Linear::new(channels, hidden, rng),
            dw: DwConv2dLayer::new(hidden, [3, 3], rng),
            down: Linear::new(hidden, channels, rng),
        }
    }

    pub fn forward(&self, tokens: &Tensor<E>, grid: (usize, usize)) -> Result<Tensor<E>> {
        let sh = tokens.shape();
        let (s, l) = (sh[0], sh[1]);
        let (p, q) = grid;
        if l != p * q {
            return Err(Error::shape(
                "tp_ffn",
                format!("token count {l} does not match grid {p}x{q}"),
            ));
        }
        let hidden = self.up.b.numel();
        let x = self.up.forward(&self.ln.forward(tokens, 2)?)?;
        let planes = x
            .reshape(&[s, p, q, hidden])?
            .permute(&[0, 3, 1, 2])?;
        let mixed = self.dw.forward(&planes)?.gelu()?;
        let flat = mixed
            .permute(&[0, 2, 3, 1])?
            .reshape(&[s, l, hidden])?;
        self.down.forward(&flat)
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        self.ln.visit(&key(prefix, "ln"), f);
        self.up.visit(&key(prefix, "up"), f);
        self.dw.visit(&key(prefix, "dw"), f);
        self.down.visit(&key(prefix, "down"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        self.ln.visit_mut(&key(prefix, "ln"), f);
        self.up.visit_mut(&key(prefix, "up"), f);
        self.dw.visit_mut(&key(prefix, "dw"), f);
        self.down.visit_mut(&key(prefix, "down"), f);
    }
}

/// Plain per-token MLP, kept as the ablation counterpart of [`TpFfn`].
pub struct Mlp1d<E: Elem> {
    pub ln: LayerNormLayer<E>,
    pub up: Linear<E>,
    pub down: Linear<E>,
}

impl<E: Elem> Mlp1d<E> {
    pub fn new(channels: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        Mlp1d {
            ln: LayerNormLayer::new(channels),
            up: Linear::new(channels, channels * ratio, rng),
            down: Linear::new(channels * ratio, channels, rng),
        }
    }

    pub fn forward(&self, tokens: &Tensor<E>) -> Result<Tensor<E>> {
        let x = self.up.forward(&self.ln.forward(tokens, 2)?)?.gelu()?;
        self.down.forward(&x)
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        self.ln.visit(&key(prefix, "ln"), f);
        self.up.visit(&key(prefix, "up"), f);
        self.down.visit(&key(prefix, "down"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        self.ln.visit_mut(&key(prefix, "ln"), f);
        self.up.visit_mut(&key(prefix, "up"), f);
        self.down.visit_mut(&key(prefix, "down"), f);
    }
}

pub enum FfnKind<E: Elem> {
    TokenPlane(TpFfn<E>),
    PerToken(Mlp1d<E>),
}

impl<E: Elem> FfnKind<E> {
    fn forward(&self, tokens: &Tensor<E>, grid: (usize, usize)) -> Result<Tensor<E>> {
        match self {
            FfnKind::TokenPlane(f) => f.forward(tokens, grid),
            FfnKind::PerToken(f) => f.forward(tokens),
        }
    }

    fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        match self {
            FfnKind::TokenPlane(m) => m.visit(prefix, f),
            FfnKind::PerToken(m) => m.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        match self {
            FfnKind::TokenPlane(m) => m.visit_mut(prefix, f),
            FfnKind::PerToken(m) => m.visit_mut(prefix, f),
        }
    }
}

/// Stochastic depth: in training, each sequence keeps the residual update
/// with probability `1 - rate` and the kept updates are rescaled so the
/// expectation matches evaluation. Identity in eval or at rate zero.
fn drop_path<E: Elem>(update: Tensor<E>, rate: f64, mode: &mut Mode) -> Result<Tensor<E>> {
    let rng = match mode {
        Mode::Train { rng } if rate > 0.0 => rng,
        _ => return Ok(update),
    };
    let s = update.shape()[0];
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<E> = (0..s)
        .map(|_| {
            if rng.random_range(0.0..1.0) < rate {
                E::from_f64(0.0)
            } else {
                E::from_f64(keep)
            }
        })
        .collect();
    let m = Tensor::from_vec(mask, &[s, 1, 1])?;
    update.mul(&m)
}

/// Settings shared by every directional branch of a block.
#[derive(Clone, Copy, Debug)]
pub struct BranchConfig {
    pub channels: usize,
    pub heads: usize,
    pub ffn_ratio: usize,
    pub layerscale_init: f64,
    pub droppath_rate: f64,
    /// Half-width of the attention band along the spatial coordinate;
    /// `None` means full attention.
    pub local_window: Option<usize>,
    /// Use the per-token MLP instead of the token-plane feed-forward.
    pub ffn_per_token: bool,
}

pub struct EpiBranch<E: Elem> {
    pub ln1: LayerNormLayer<E>,
    pub attn: Mhsa<E>,
    pub g1: LayerScale<E>,
    pub ffn: FfnKind<E>,
    pub g2: LayerScale<E>,
    droppath_rate: f64,
    local_window: Option<usize>,
}

impl<E: Elem> EpiBranch<E> {
    pub fn new(cfg: &BranchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let ffn = if cfg.ffn_per_token {
            FfnKind::PerToken(Mlp1d::new(cfg.channels, cfg.ffn_ratio, rng))
        } else {
            FfnKind::TokenPlane(TpFfn::new(cfg.channels, cfg.ffn_ratio, rng))
        };
        Ok(EpiBranch {
            ln1: LayerNormLayer::new(cfg.channels),
            attn: Mhsa::new(cfg.channels, cfg.heads, rng)?,
            g1: LayerScale::new(cfg.channels, cfg.layerscale_init),
            ffn,
            g2: LayerScale::new(cfg.channels, cfg.layerscale_init),
            droppath_rate: cfg.droppath_rate,
            local_window: cfg.local_window,
        })
    }

    /// Two residual halves over `(S, L, C)` tokens laid out on a `(P, Q)`
    /// grid: attention first, then the feed-forward on the updated tokens.
    pub fn forward(
        &self,
        tokens: &Tensor<E>,
        grid: (usize, usize),
        mode: &mut Mode,
    ) -> Result<Tensor<E>> {
        let mask = self.local_window.map(|w| band_mask(grid.0, grid.1, w));
        let normed = self.ln1.forward(tokens, 2)?;
        let attended = self.attn.forward(&normed, mask.as_ref())?;
        let upd1 = drop_path(self.g1.forward(&attended)?, self.droppath_rate, mode)?;
        let x1 = tokens.add(&upd1)?;
        let upd2 = drop_path(
            self.g2.forward(&self.ffn.forward(&x1, grid)?)?,
            self.droppath_rate,
            mode,
        )?;
        x1.add(&upd2)
    }

    /// Zeroes both residual gains, turning the branch into the identity.
    pub fn zero_residual_gains(&mut self) {
        self.g1.zero();
        self.g2.zero();
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        self.ln1.visit(&key(prefix, "ln1"), f);
        self.attn.visit(&key(prefix, "attn"), f);
        self.g1.visit(&key(prefix, "g1"), f);
        self.ffn.visit(&key(prefix, "ffn"), f);
        self.g2.visit(&key(prefix, "g2"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        self.ln1.visit_mut(&key(prefix, "ln1"), f);
        self.attn.visit_mut(&key(prefix, "attn"), f);
        self.g1.visit_mut(&key(prefix, "g1"), f);
        self.ffn.visit_mut(&key(prefix, "ffn"), f);
        self.g2.visit_mut(&key(prefix, "g2"), f);
    }
}

//! End-to-end model assembly: shallow feature extraction, optional
//! macro-pixel prior, the omnidirectional block stack, and the pixel-shuffle
//! reconstruction head with a global bicubic residual.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::blocks::layers::Conv3dLayer;
use crate::blocks::omni::OmniEpiBlock;
use crate::blocks::{key, Mode, ParamVisitor, ParamVisitorMut};
use crate::error::{Error, Result};
use crate::eval::color::{rgb_to_ycbcr, ycbcr_to_rgb};
use crate::geometry::{macpi_to_lf, to_macpi, LightField};
use crate::tensor::autodiff::no_grad;
use crate::tensor::ops::resample::Scale;
use crate::tensor::{Elem, Tensor};

/// Macro-pixel prior: a dilated 2D convolution over the interleaved
/// `(U·H, V·W)` image. Dilation `(U, V)` keeps every tap on the same view,
/// so the prior mixes each view's own 3x3 spatial neighborhood while the
/// channels observe the angular interleave.
pub struct MacPiPrior<E: Elem> {
    pub conv: Conv3dLayer<E>,
    pub fuse: Conv3dLayer<E>,
}

impl<E: Elem> MacPiPrior<E> {
    pub fn new(channels: usize, u: usize, v: usize, rng: &mut ChaCha8Rng) -> Self {
        MacPiPrior {
            conv: Conv3dLayer::new(channels, 1, [1, 3, 3], [1, u, v], rng),
            fuse: Conv3dLayer::new(channels, 2 * channels, [1, 1, 1], [1, 1, 1], rng),
        }
    }

    /// Prior features of a single-channel field, in light-field layout.
    pub fn features(&self, lr_y: &LightField<E>) -> Result<Tensor<E>> {
        let mac = to_macpi(lr_y)?;
        let sh = mac.tensor().shape().to_vec();
        let planes = mac
            .tensor()
            .reshape(&[sh[0], 1, 1, sh[2], sh[3]])?;
        let feat = self.conv.forward(&planes)?;
        let c = feat.shape()[1];
        let flat = feat.reshape(&[sh[0], c, sh[2], sh[3]])?;
        Ok(macpi_to_lf(&flat, lr_y.u(), lr_y.v())?.into_tensor())
    }
}

/// Rearranges `(B, C·a², A, H, W)` into `(B, C, A, a·H, a·W)`: input channel
/// `c·a² + i·a + j` lands on output spatial offset `(i, j)`.
pub fn pixel_shuffle<E: Elem>(t: &Tensor<E>, a: usize) -> Result<Tensor<E>> {
    let sh = t.shape();
    if sh.len() != 5 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("expected rank-5 field, got rank {}", sh.len()),
        ));
    }
    if a == 0 || sh[1] % (a * a) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("channels {} not divisible by {a}^2", sh[1]),
        ));
    }
    let (b, c, v, h, w) = (sh[0], sh[1] / (a * a), sh[2], sh[3], sh[4]);
    t.reshape(&[b, c, a, a, v, h, w])?
        .permute(&[0, 1, 4, 5, 2, 6, 3])?
        .reshape(&[b, c, v, h * a, w * a])
}

pub struct GtfModel<E: Elem> {
    cfg: ModelConfig,
    pub shallow: Conv3dLayer<E>,
    pub prior: Option<MacPiPrior<E>>,
    pub ang: Option<Tensor<E>>,
    pub blocks: Vec<OmniEpiBlock<E>>,
    pub mla: Option<Conv3dLayer<E>>,
    pub head_up: Conv3dLayer<E>,
    pub head_out: Conv3dLayer<E>,
}

impl<E: Elem> GtfModel<E> {
    /// Builds the model with seed-deterministic parameters. Construction
    /// order is fixed; the same seed and config always give the same weights.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let shallow = Conv3dLayer::new(c, 1, [3, 3, 3], [1, 1, 1], &mut rng);
        let prior = cfg
            .use_macpi_prior
            .then(|| MacPiPrior::new(c, cfg.u, cfg.v, &mut rng));
        let ang = cfg
            .use_angular_embed
            .then(|| Tensor::zeros(&[1, c, cfg.angular_views(), 1, 1]).var());
        let block_cfg = cfg.block_config();
        let blocks = (0..cfg.blocks)
            .map(|_| OmniEpiBlock::new(&block_cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mla = (!cfg.mla_taps.is_empty()).then(|| {
            Conv3dLayer::new(c, cfg.mla_taps.len() * c, [1, 1, 1], [1, 1, 1], &mut rng)
        });
        let head_up = Conv3dLayer::new(c * cfg.scale * cfg.scale, c, [1, 1, 1], [1, 1, 1], &mut rng);
        let head_out = Conv3dLayer::new(1, c, [1, 3, 3], [1, 1, 1], &mut rng);
        Ok(GtfModel {
            cfg: cfg.clone(),
            shallow,
            prior,
            ang,
            blocks,
            mla,
            head_up,
            head_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn check_input(&self, lf: &LightField<E>, channels: usize, op: &'static str) -> Result<()> {
        if lf.channels() != channels {
            return Err(Error::shape(
                op,
                format!("expected {channels} channel(s), got {}", lf.channels()),
            ));
        }
        if lf.u() != self.cfg.u || lf.v() != self.cfg.v {
            return Err(Error::shape(
                op,
                format!(
                    "angular grid {}x{} does not match config {}x{}",
                    lf.u(),
                    lf.v(),
                    self.cfg.u,
                    self.cfg.v
                ),
            ));
        }
        Ok(())
    }

    /// Luminance pathway: `(B, 1, A, H, W)` in, `(B, 1, A, aH, aW)` out,
    /// including the global bicubic residual. This is the trained path.
    pub fn forward_y(&self, lr_y: &LightField<E>, mode: &mut Mode) -> Result<LightField<E>> {
        self.check_input(lr_y, 1, "forward_y")?;
        let mut f0 = self.shallow.forward(lr_y.tensor())?;
        if let Some(prior) = &self.prior {
            let p = prior.features(lr_y)?;
            f0 = prior.fuse.forward(&Tensor::concat(&[&f0, &p], 1)?)?;
        }
        if let Some(ang) = &self.ang {
            f0 = f0.add(ang)?;
        }
        let mut x = LightField::new(f0.clone(), self.cfg.u, self.cfg.v)?;
        let mut taps = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x, mode)?;
            if self.cfg.mla_taps.contains(&i) {
                taps.push(x.tensor().clone());
            }
        }
        let body = match &self.mla {
            Some(mla) => {
                let refs: Vec<&Tensor<E>> = taps.iter().collect();
                mla.forward(&Tensor::concat(&refs, 1)?)?
            }
            None => x.tensor().add(&f0)?,
        };
        let up = pixel_shuffle(&self.head_up.forward(&body)?, self.cfg.scale)?;
        let pred = self.head_out.forward(&up)?;
        let bicubic = lr_y.tensor().bicubic2d(Scale::Up(self.cfg.scale))?;
        lr_y.with_tensor(pred.add(&bicubic)?)
    }

    /// Full RGB pathway for inference: luminance through the network,
    /// chroma bicubically upsampled, output clamped to [0, 1]. Runs without
    /// gradient recording.
    pub fn forward_rgb(&self, lr_rgb: &LightField<E>) -> Result<LightField<E>> {
        self.check_input(lr_rgb, 3, "forward_rgb")?;
        no_grad(|| {
            let (y, cb, cr) = rgb_to_ycbcr(lr_rgb.tensor())?;
            let y_lf = LightField::new(y, self.cfg.u, self.cfg.v)?;
            let sr_y = self.forward_y(&y_lf, &mut Mode::Eval)?;
            let cb_up = cb.bicubic2d(Scale::Up(self.cfg.scale))?;
            let cr_up = cr.bicubic2d(Scale::Up(self.cfg.scale))?;
            let rgb = ycbcr_to_rgb(sr_y.tensor(), &cb_up, &cr_up)?.clamp(0.0, 1.0)?;
            lr_rgb.with_tensor(rgb)
        })
    }

    /// Zeroes every residual pathway (block gains and output convolutions,
    /// both head convolutions), reducing the whole network to its bicubic
    /// skip connection.
    pub fn zero_residual_paths(&mut self) {
        for block in &mut self.blocks {
            block.zero_residual_paths();
        }
        self.head_up.zero();
        self.head_out.zero();
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        self.shallow.visit(&key(prefix, "shallow"), f);
        if let Some(p) = &self.prior {
            p.conv.visit(&key(prefix, "prior.conv"), f);
            p.fuse.visit(&key(prefix, "prior.fuse"), f);
        }
        if let Some(a) = &self.ang {
            f(&key(prefix, "ang"), a);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&key(prefix, &format!("blocks.{i}")), f);
        }
        if let Some(m) = &self.mla {
            m.visit(&key(prefix, "mla"), f);
        }
        self.head_up.visit(&key(prefix, "head.up"), f);
        self.head_out.visit(&key(prefix, "head.out"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        self.shallow.visit_mut(&key(prefix, "shallow"), f);
        if let Some(p) = &mut self.prior {
            p.conv.visit_mut(&key(prefix, "prior.conv"), f);
            p.fuse.visit_mut(&key(prefix, "prior.fuse"), f);
        }
        if let Some(a) = &mut self.ang {
            f(&key(prefix, "ang"), a);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&key(prefix, &format!("blocks.{i}")), f);
        }
        if let Some(m) = &mut self.mla {
            m.visit_mut(&key(prefix, "mla"), f);
        }
        self.head_up.visit_mut(&key(prefix, "head.up"), f);
        self.head_out.visit_mut(&key(prefix, "head.out"), f);
    }

    /// Total trainable parameter count of the constructed model.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.numel());
        n
    }
}

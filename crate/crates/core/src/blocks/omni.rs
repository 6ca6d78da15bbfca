//! The omnidirectional block: one transformer branch per epipolar direction
//! (horizontal, vertical, both diagonals) fused adaptively back into the
//! light-field feature tensor.

use rand_chacha::ChaCha8Rng;

use super::branch::{BranchConfig, EpiBranch};
use super::fusion::{DirectionalFusion, FusionConfig};
use super::layers::Conv3dLayer;
use super::{key, tokens_to_view, view_to_tokens, Mode, ParamVisitor, ParamVisitorMut};
use crate::error::Result;
use crate::geometry::{
    extract_diagonals, from_epi, scatter_diagonals, to_horizontal_epi, to_vertical_epi, EpiView,
    LightField,
};
use crate::tensor::{Elem, Tensor};

/// Horizontal/vertical branch sharing. The shared variant reuses one set of
/// weights for both directions; the split variant learns them separately.
pub enum HvBranches<E: Elem> {
    Shared(EpiBranch<E>),
    Split { h: EpiBranch<E>, v: EpiBranch<E> },
}

impl<E: Elem> HvBranches<E> {
    fn horizontal(&self) -> &EpiBranch<E> {
        match self {
            HvBranches::Shared(b) => b,
            HvBranches::Split { h, .. } => h,
        }
    }

    fn vertical(&self) -> &EpiBranch<E> {
        match self {
            HvBranches::Shared(b) => b,
            HvBranches::Split { v, .. } => v,
        }
    }
}

/// Diagonal pathway: one branch applied to both diagonal fans, scattered
/// back onto the angular grid and refined by a small convolution.
pub struct DiagonalPath<E: Elem> {
    pub branch: EpiBranch<E>,
    pub refine: Conv3dLayer<E>,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockConfig {
    pub branch: BranchConfig,
    pub fusion: FusionConfig,
    pub share_hv: bool,
    pub use_diagonal: bool,
    /// Cubic kernel extent of the diagonal refinement convolution (1 or 3).
    pub refine_kernel: usize,
}

pub struct OmniEpiBlock<E: Elem> {
    pub hv: HvBranches<E>,
    pub diag: Option<DiagonalPath<E>>,
    pub fusion: DirectionalFusion<E>,
}

impl<E: Elem> OmniEpiBlock<E> {
    pub fn new(cfg: &BlockConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let hv = if cfg.share_hv {
            HvBranches::Shared(EpiBranch::new(&cfg.branch, rng)?)
        } else {
            HvBranches::Split {
                h: EpiBranch::new(&cfg.branch, rng)?,
                v: EpiBranch::new(&cfg.branch, rng)?,
            }
        };
        let diag = if cfg.use_diagonal {
            let k = cfg.refine_kernel;
            Some(DiagonalPath {
                branch: EpiBranch::new(&cfg.branch, rng)?,
                refine: Conv3dLayer::new(
                    cfg.branch.channels,
                    cfg.branch.channels,
                    [k, k, k],
                    [1, 1, 1],
                    rng,
                ),
            })
        } else {
            None
        };
        Ok(OmniEpiBlock {
            hv,
            diag,
            fusion: DirectionalFusion::new(&cfg.fusion, rng)?,
        })
    }

    fn run_branch(
        branch: &EpiBranch<E>,
        view: &EpiView<E>,
        mode: &mut Mode,
    ) -> Result<EpiView<E>> {
        let (tokens, dims) = view_to_tokens(view.tensor())?;
        let out = branch.forward(&tokens, (dims.p, dims.q), mode)?;
        view.with_tensor(tokens_to_view(&out, dims)?)
    }

    pub fn forward(&self, fin: &LightField<E>, mode: &mut Mode) -> Result<LightField<E>> {
        let fh = from_epi(&Self::run_branch(
            self.hv.horizontal(),
            &to_horizontal_epi(fin)?,
            mode,
        )?)?;
        let fv = from_epi(&Self::run_branch(
            self.hv.vertical(),
            &to_vertical_epi(fin)?,
            mode,
        )?)?;
        let fd = match &self.diag {
            Some(path) => {
                let (e45, e135) = extract_diagonals(fin)?;
                let p45 = Self::run_branch(&path.branch, &e45, mode)?;
                let p135 = Self::run_branch(&path.branch, &e135, mode)?;
                let scattered = scatter_diagonals(&p45, &p135, fin)?;
                fin.tensor().add(&path.refine.forward(scattered.tensor())?)?
            }
            None => Tensor::zeros(fin.tensor().shape()),
        };
        let fused = self
            .fusion
            .forward(fh.tensor(), fv.tensor(), &fd, fin.tensor())?;
        fin.with_tensor(fused)
    }

    /// Zeroes every residual gain and output convolution, making the whole
    /// block the identity map.
    pub fn zero_residual_paths(&mut self) {
        match &mut self.hv {
            HvBranches::Shared(b) => b.zero_residual_gains(),
            HvBranches::Split { h, v } => {
                h.zero_residual_gains();
                v.zero_residual_gains();
            }
        }
        if let Some(path) = &mut self.diag {
            path.branch.zero_residual_gains();
            path.refine.zero();
        }
        self.fusion.zero_output_conv();
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<E>) {
        match &self.hv {
            HvBranches::Shared(b) => b.visit(&key(prefix, "hv"), f),
            HvBranches::Split { h, v } => {
                h.visit(&key(prefix, "h"), f);
                v.visit(&key(prefix, "v"), f);
            }
        }
        if let Some(path) = &self.diag {
            path.branch.visit(&key(prefix, "diag"), f);
            path.refine.visit(&key(prefix, "refine"), f);
        }
        self.fusion.visit(&key(prefix, "fusion"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<E>) {
        match &mut self.hv {
            HvBranches::Shared(b) => b.visit_mut(&key(prefix, "hv"), f),
            HvBranches::Split { h, v } => {
                h.visit_mut(&key(prefix, "h"), f);
                v.visit_mut(&key(prefix, "v"), f);
            }
        }
        if let Some(path) = &mut self.diag {
            path.branch.visit_mut(&key(prefix, "diag"), f);
            path.refine.visit_mut(&key(prefix, "refine"), f);
        }
        self.fusion.visit_mut(&key(prefix, "fusion"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;

    fn toy_cfg(c: usize, share_hv: bool, use_diagonal: bool) -> BlockConfig {
        BlockConfig {
            branch: BranchConfig {
                channels: c,
                heads: 2,
                ffn_ratio: 2,
                layerscale_init: 1e-2,
                droppath_rate: 0.0,
                local_window: None,
                ffn_per_token: false,
            },
            fusion: FusionConfig {
                channels: c,
                reduction: 2,
                sigmoid: false,
                fuse_kernel: 1,
                adaptive: true,
            },
            share_hv,
            use_diagonal,
            refine_kernel: 1,
        }
    }

    fn toy_field(c: usize, u: usize, h: usize, seed: u64) -> LightField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::rand_uniform(&[1, c, u * u, h, h], -1.0, 1.0, &mut rng);
        LightField::new(t, u, u).unwrap()
    }

    #[test]
    fn zeroed_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut blk = OmniEpiBlock::<f64>::new(&toy_cfg(4, false, true), &mut rng).unwrap();
        blk.zero_residual_paths();
        let lf = toy_field(4, 3, 4, 6);
        let out = blk.forward(&lf, &mut Mode::Eval).unwrap();
        assert_eq!(out.tensor().data(), lf.tensor().data());
    }

    #[test]
    fn output_shape_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let blk = OmniEpiBlock::<f64>::new(&toy_cfg(4, true, true), &mut rng).unwrap();
        let lf = toy_field(4, 3, 5, 7);
        let out = blk.forward(&lf, &mut Mode::Eval).unwrap();
        assert_eq!(out.tensor().shape(), lf.tensor().shape());
        assert_eq!(out.u(), 3);
    }

    #[test]
    fn shared_hv_reuses_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let shared = OmniEpiBlock::<f64>::new(&toy_cfg(4, true, false), &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let split = OmniEpiBlock::<f64>::new(&toy_cfg(4, false, false), &mut rng).unwrap();
        let count = |b: &OmniEpiBlock<f64>| {
            let mut n = 0;
            b.visit("blk", &mut |_, p| n += p.numel());
            n
        };
        let branch_params = {
            let mut rng = ChaCha8Rng::seed_from_u64(47);
            let br = EpiBranch::<f64>::new(&toy_cfg(4, true, false).branch, &mut rng).unwrap();
            let mut n = 0;
            br.visit("b", &mut |_, p| n += p.numel());
            n
        };
        assert_eq!(count(&split) - count(&shared), branch_params);
    }

    #[test]
    fn disabled_diagonal_contributes_nothing() {
        // With the diagonal path off, the fused sum only sees H and V.
        // Verified indirectly: a block without the diagonal path has no
        // diagonal parameters, and its forward still runs on non-square
        // angular grids where diagonal extraction would fail.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let blk = OmniEpiBlock::<f64>::new(&toy_cfg(4, true, false), &mut rng).unwrap();
        let mut r2 = ChaCha8Rng::seed_from_u64(54);
        let t = Tensor::rand_uniform(&[1, 4, 6, 3, 4], -1.0, 1.0, &mut r2);
        let lf = LightField::new(t, 2, 3).unwrap();
        let out = blk.forward(&lf, &mut Mode::Eval).unwrap();
        assert_eq!(out.tensor().shape(), lf.tensor().shape());
        let mut names = Vec::new();
        blk.visit("blk", &mut |name, _| names.push(name.to_string()));
        assert!(names.iter().all(|n| !n.contains("diag") && !n.contains("refine")));
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let blk = OmniEpiBlock::<f64>::new(&toy_cfg(2, true, true), &mut rng).unwrap();
        let lf = toy_field(2, 2, 3, 8);
        let x = lf.tensor().clone().var();
        let report = grad_check(
            |t| {
                let field = LightField::new(t[0].clone(), 2, 2)?;
                let out = blk.forward(&field, &mut Mode::Eval)?;
                out.tensor().square()?.mean_all()
            },
            &[x],
            &GradCheckConfig {
                max_per_param: 24,
                ..GradCheckConfig::default()
            },
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn train_mode_droppath_changes_output_stochastically() {
        let mut cfg = toy_cfg(4, true, false);
        cfg.branch.droppath_rate = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let blk = OmniEpiBlock::<f64>::new(&cfg, &mut rng).unwrap();
        let lf = toy_field(4, 2, 3, 9);
        let eval = blk.forward(&lf, &mut Mode::Eval).unwrap();
        let mut tr_rng = ChaCha8Rng::seed_from_u64(100);
        let train = blk
            .forward(&lf, &mut Mode::Train { rng: &mut tr_rng })
            .unwrap();
        assert!(eval
            .tensor()
            .data()
            .iter()
            .zip(train.tensor().data())
            .any(|(a, b)| a != b));
        // Same seed, same draw: training forward is reproducible.
        let mut tr_rng2 = ChaCha8Rng::seed_from_u64(100);
        let train2 = blk
            .forward(&lf, &mut Mode::Train { rng: &mut tr_rng2 })
            .unwrap();
        assert_eq!(train.tensor().data(), train2.tensor().data());
    }
}

//! Named central-difference checks covering each block family, shared by
//! the command-line `gradcheck` and the acceptance suite. Every entry
//! differentiates a scalar loss through a block's public forward in f64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::gtf::{pixel_shuffle, GtfModel, MacPiPrior};
use crate::blocks::attention::band_mask;
use crate::blocks::branch::{BranchConfig, TpFfn};
use crate::blocks::fusion::FusionConfig;
use crate::blocks::layers::Conv3dLayer;
use crate::blocks::omni::BlockConfig;
use crate::blocks::{DirectionalFusion, EpiBranch, Mhsa, Mode, OmniEpiBlock};
use crate::error::Result;
use crate::geometry::LightField;
use crate::tensor::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::tensor::Tensor;
use crate::train::charbonnier_ohem;

pub struct BlockGradReport {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn branch_cfg(channels: usize) -> BranchConfig {
    BranchConfig {
        channels,
        heads: 2,
        ffn_ratio: 2,
        layerscale_init: 1e-2,
        droppath_rate: 0.0,
        local_window: Some(1),
        ffn_per_token: false,
    }
}

/// Runs every registered block check with RNG streams derived from `seed`.
/// `max_per_param` caps probed elements per input tensor.
pub fn block_grad_suite(seed: u64, max_per_param: usize) -> Result<Vec<BlockGradReport>> {
    let fd = GradCheckConfig { max_per_param, ..GradCheckConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mhsa = Mhsa::<f64>::new(4, 2, &mut rng)?;
    let x = Tensor::rand_uniform(&[1, 4, 4], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "mhsa_full",
        report: grad_check(|t| mhsa.forward(&t[0], None)?.square()?.mean_all(), &[x], &fd)?,
    });

    let mask = band_mask(2, 2, 1);
    let x = Tensor::rand_uniform(&[1, 4, 4], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "mhsa_banded",
        report: grad_check(
            |t| mhsa.forward(&t[0], Some(&mask))?.square()?.mean_all(),
            &[x],
            &fd,
        )?,
    });

    let ffn = TpFfn::<f64>::new(4, 2, &mut rng);
    let x = Tensor::rand_uniform(&[2, 6, 4], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "tp_ffn",
        report: grad_check(
            |t| ffn.forward(&t[0], (2, 3))?.square()?.mean_all(),
            &[x],
            &fd,
        )?,
    });

    let branch = EpiBranch::<f64>::new(&branch_cfg(4), &mut rng)?;
    let x = Tensor::rand_uniform(&[1, 6, 4], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "epi_branch",
        report: grad_check(
            |t| branch.forward(&t[0], (2, 3), &mut Mode::Eval)?.square()?.mean_all(),
            &[x],
            &fd,
        )?,
    });

    let fusion = DirectionalFusion::<f64>::new(
        &FusionConfig { channels: 2, reduction: 2, sigmoid: false, fuse_kernel: 1, adaptive: true },
        &mut rng,
    )?;
    let feats: Vec<Tensor<f64>> = (0..4)
        .map(|_| Tensor::rand_uniform(&[1, 2, 2, 2, 2], -1.0, 1.0, &mut rng))
        .collect();
    out.push(BlockGradReport {
        name: "directional_fusion",
        report: grad_check(
            |t| fusion.forward(&t[0], &t[1], &t[2], &t[3])?.square()?.mean_all(),
            &feats,
            &fd,
        )?,
    });

    let block = OmniEpiBlock::<f64>::new(
        &BlockConfig {
            branch: branch_cfg(2),
            fusion: FusionConfig {
                channels: 2,
                reduction: 2,
                sigmoid: false,
                fuse_kernel: 1,
                adaptive: true,
            },
            share_hv: true,
            use_diagonal: true,
            refine_kernel: 1,
        },
        &mut rng,
    )?;
    let x = Tensor::rand_uniform(&[1, 2, 4, 3, 4], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "omni_epi_block",
        report: grad_check(
            |t| {
                let field = LightField::new(t[0].clone(), 2, 2)?;
                block.forward(&field, &mut Mode::Eval)?.tensor().square()?.mean_all()
            },
            &[x],
            &fd,
        )?,
    });

    let prior = MacPiPrior::<f64>::new(3, 2, 2, &mut rng);
    let x = Tensor::rand_uniform(&[1, 1, 4, 3, 3], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "macpi_prior",
        report: grad_check(
            |t| {
                let field = LightField::new(t[0].clone(), 2, 2)?;
                prior.features(&field)?.square()?.mean_all()
            },
            &[x],
            &fd,
        )?,
    });

    let head_up = Conv3dLayer::<f64>::new(2 * 4, 2, [1, 1, 1], [1, 1, 1], &mut rng);
    let head_out = Conv3dLayer::<f64>::new(1, 2, [1, 3, 3], [1, 1, 1], &mut rng);
    let x = Tensor::rand_uniform(&[1, 2, 4, 3, 3], -1.0, 1.0, &mut rng);
    out.push(BlockGradReport {
        name: "pixel_shuffle_head",
        report: grad_check(
            |t| {
                let up = pixel_shuffle(&head_up.forward(&t[0])?, 2)?;
                head_out.forward(&up)?.square()?.mean_all()
            },
            &[x],
            &fd,
        )?,
    });

    // Distinct per-pixel gaps keep the top-k selection stable under the
    // finite-difference probes.
    let pred: Vec<f64> = (0..12).map(|i| 0.05 + 0.07 * i as f64).collect();
    let pred = Tensor::from_vec(pred, &[1, 1, 1, 3, 4])?;
    let target = Tensor::zeros(&[1, 1, 1, 3, 4]);
    out.push(BlockGradReport {
        name: "ohem_loss",
        report: grad_check(
            |t| charbonnier_ohem(&t[0], &target, 0.5, 1e-3),
            &[pred],
            &fd,
        )?,
    });

    let mut cfg = ModelConfig::nano();
    cfg.blocks = 1;
    let model = GtfModel::<f64>::new(&cfg, seed ^ 0x5eed)?;
    let x = Tensor::rand_uniform(&[1, 1, cfg.u * cfg.v, 4, 4], -1.0, 1.0, &mut rng);
    let (u, v) = (cfg.u, cfg.v);
    out.push(BlockGradReport {
        name: "model_end_to_end",
        report: grad_check(
            |t| {
                let field = LightField::new(t[0].clone(), u, v)?;
                model.forward_y(&field, &mut Mode::Eval)?.tensor().square()?.mean_all()
            },
            &[x],
            &fd,
        )?,
    });

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_block_passes() {
        for report in block_grad_suite(1, 12).unwrap() {
            assert!(
                report.report.max_rel_err < 1e-4,
                "{}: rel err {}",
                report.name,
                report.report.max_rel_err
            );
            assert!(report.report.probed > 0, "{}", report.name);
        }
    }

    #[test]
    fn suite_covers_all_block_families() {
        let names: Vec<_> = block_grad_suite(2, 2)
            .unwrap()
            .into_iter()
            .map(|r| r.name)
            .collect();
        assert_eq!(
            names,
            [
                "mhsa_full",
                "mhsa_banded",
                "tp_ffn",
                "epi_branch",
                "directional_fusion",
                "omni_epi_block",
                "macpi_prior",
                "pixel_shuffle_head",
                "ohem_loss",
                "model_end_to_end"
            ]
        );
    }
}

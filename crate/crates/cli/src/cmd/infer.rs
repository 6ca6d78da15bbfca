//! Inference: checkpoint -> model, optional tiled EPSW and dihedral
//! self-ensemble, output bundle.

use gtf_core::blocks::Mode;
use gtf_core::eval::{epsw_infer, tta_infer, BlendWindow, TileSpec};
use gtf_core::geometry::LightField;
use gtf_core::io::{load_bundle, save_bundle, BundleFormat};
use gtf_core::model::{Checkpoint, WeightSet};
use gtf_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::{InferArgs, WeightChoice};

pub fn run(args: InferArgs) -> Result<u8> {
    let format = BundleFormat::parse(&args.format)?;
    let which = match args.weights {
        WeightChoice::Ema => WeightSet::Ema,
        WeightChoice::Raw => WeightSet::Raw,
    };
    let ckpt = Checkpoint::<f32>::load(&args.checkpoint)?;
    let model = ckpt.build_model(which)?;

    let lf = load_bundle::<f32>(&args.input)?;
    if lf.u() != model.config().u || lf.v() != model.config().v {
        return Err(Error::Contract {
            op: "infer",
            msg: format!(
                "input grid {}x{} does not match the checkpoint's {}x{}",
                lf.u(),
                lf.v(),
                model.config().u,
                model.config().v
            ),
        });
    }
    let rgb = lf.channels() == 3;

    let base = |x: &LightField<f32>| -> Result<LightField<f32>> {
        if rgb {
            model.forward_rgb(x)
        } else {
            model.forward_y(x, &mut Mode::Eval)
        }
    };
    let spec = TileSpec {
        patch: args.patch,
        stride: args.stride,
        window: BlendWindow::Hann,
    };
    let tiled = |x: &LightField<f32>| -> Result<LightField<f32>> {
        if args.epsw {
            epsw_infer(&base, x, &spec)
        } else {
            base(x)
        }
    };

    let mut folds = 1;
    let sr = if args.tta {
        if lf.u() != lf.v() {
            eprintln!(
                "warning: {}x{} grid has no transpose symmetry; averaging 4 elements",
                lf.u(),
                lf.v()
            );
        }
        let (sr, n) = tta_infer(&tiled, &lf)?;
        folds = n;
        sr
    } else {
        tiled(&lf)?
    };

    save_bundle(&args.out, &sr, format)?;
    let mut manifest = RunManifest::new("infer");
    manifest.config(vec![
        format!("checkpoint={}", args.checkpoint.display()),
        format!("weights={}", if which == WeightSet::Ema { "ema" } else { "raw" }),
        format!("epsw={}", args.epsw),
        format!("tta={}", args.tta),
        format!("patch={}", args.patch),
        format!("stride={}", args.stride),
        format!("format={}", format.name()),
    ]);
    manifest.output(&args.out);
    manifest.write(&args.out)?;
    println!(
        "super-resolved {}x{} -> {}x{} ({} views, {} ensemble pass{})",
        lf.height(),
        lf.width(),
        sr.height(),
        sr.width(),
        sr.views(),
        folds,
        if folds == 1 { "" } else { "es" }
    );
    Ok(0)
}

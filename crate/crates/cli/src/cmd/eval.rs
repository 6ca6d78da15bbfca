//! Metric evaluation of one bundle pair on the Y channel.

use std::io::Write;

use gtf_core::eval::{psnr_y, ssim_y};
use gtf_core::io::{write_metric_report, SceneScores};
use gtf_core::{Error, Result};

use crate::cmd::load_luma;
use crate::manifest::RunManifest;
use crate::EvalArgs;

pub fn run(args: EvalArgs) -> Result<u8> {
    let pred = load_luma::<f64>(&args.pred)?;
    let gt = load_luma::<f64>(&args.gt)?;
    let scene = args.scene.clone().unwrap_or_else(|| {
        args.pred
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into())
    });
    let scores = SceneScores {
        scene,
        psnr: psnr_y(&pred, &gt)?,
        ssim: ssim_y(&pred, &gt)?,
    };

    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_metric_report(&mut buf, &[scores])?;
            std::fs::write(path, &buf)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            if let Some(dir) = path.parent() {
                let mut manifest = RunManifest::new("eval");
                manifest.output(path);
                manifest.write(dir)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            let mut buf = Vec::new();
            write_metric_report(&mut buf, &[scores])?;
            out.write_all(&buf)
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    Ok(0)
}

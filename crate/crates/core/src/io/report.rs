//! Metric report: one `scene,view,psnr,ssim` row per view plus a trailing
//! mean row over scene means.

use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::metrics::{format_db, ViewScores};

pub struct SceneScores {
    pub scene: String,
    pub psnr: ViewScores,
    pub ssim: ViewScores,
}

pub fn write_metric_report(w: &mut dyn Write, scenes: &[SceneScores]) -> Result<()> {
    if scenes.is_empty() {
        return Err(Error::contract("write_metric_report", "no scenes to report"));
    }
    let io = |e: std::io::Error| Error::io("<metric report>", e);
    writeln!(w, "scene,view,psnr,ssim").map_err(io)?;
    for s in scenes {
        if s.psnr.per_view.len() != s.ssim.per_view.len() {
            return Err(Error::contract(
                "write_metric_report",
                format!("scene '{}' has mismatched per-view lists", s.scene),
            ));
        }
        for (i, (p, q)) in s.psnr.per_view.iter().zip(&s.ssim.per_view).enumerate() {
            writeln!(w, "{},{},{},{:.4}", s.scene, i, format_db(*p), q).map_err(io)?;
        }
    }
    let n = scenes.len() as f64;
    let psnr_mean = scenes.iter().map(|s| s.psnr.mean).sum::<f64>() / n;
    let ssim_mean = scenes.iter().map(|s| s.ssim.mean).sum::<f64>() / n;
    writeln!(w, "mean,all,{},{:.4}", format_db(psnr_mean), ssim_mean).map_err(io)
}

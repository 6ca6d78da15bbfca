//! PSNR and single-scale SSIM on the luma channel, per view and averaged.

use crate::error::{Error, Result};
use crate::geometry::LightField;
use crate::tensor::Elem;

/// Per-view scores in flat view order (a = u * V + v) plus their mean.
#[derive(Clone, Debug)]
pub struct ViewScores {
    pub per_view: Vec<f64>,
    pub mean: f64,
}

impl ViewScores {
    fn from_views(per_view: Vec<f64>) -> Self {
        let mean = per_view.iter().sum::<f64>() / per_view.len() as f64;
        ViewScores { per_view, mean }
    }
}

/// Infinite PSNR serializes as the string "inf", not a sentinel number.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn single_luma_views<'a, E: Elem>(
    op: &'static str,
    pred: &'a LightField<E>,
    gt: &'a LightField<E>,
) -> Result<(Vec<f64>, Vec<f64>, usize, usize, usize)> {
    if pred.tensor().shape() != gt.tensor().shape() || pred.u() != gt.u() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", pred.tensor().shape(), gt.tensor().shape()),
        ));
    }
    if pred.batch() != 1 || pred.channels() != 1 {
        return Err(Error::contract(
            op,
            format!(
                "expected one luma image per view, got batch {} channels {}",
                pred.batch(),
                pred.channels()
            ),
        ));
    }
    let p: Vec<f64> = pred.tensor().data().iter().map(|x| x.as_f64()).collect();
    let g: Vec<f64> = gt.tensor().data().iter().map(|x| x.as_f64()).collect();
    Ok((p, g, pred.views(), pred.height(), pred.width()))
}

/// PSNR in dB against a [0, 1] dynamic range: 10 log10(1 / MSE), +inf for an
/// exact match.
pub fn psnr_y<E: Elem>(pred: &LightField<E>, gt: &LightField<E>) -> Result<ViewScores> {
    let (p, g, views, h, w) = single_luma_views("psnr_y", pred, gt)?;
    let px = h * w;
    let per_view = (0..views)
        .map(|a| {
            let mse = (0..px)
                .map(|i| {
                    let d = p[a * px + i] - g[a * px + i];
                    d * d
                })
                .sum::<f64>()
                / px as f64;
            if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (1.0 / mse).log10()
            }
        })
        .collect();
    Ok(ViewScores::from_views(per_view))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *wi = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *wi;
    }
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Windows are evaluated only where they fit;
/// images smaller than the window are compared with one global window.
pub fn ssim_y<E: Elem>(pred: &LightField<E>, gt: &LightField<E>) -> Result<ViewScores> {
    let (p, g, views, h, w) = single_luma_views("ssim_y", pred, gt)?;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let win = gaussian_window();
    let px = h * w;

    let score = |mx: f64, my: f64, sxx: f64, syy: f64, sxy: f64| {
        ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    };

    let per_view = (0..views)
        .map(|a| {
            let pv = &p[a * px..(a + 1) * px];
            let gv = &g[a * px..(a + 1) * px];
            if h < SSIM_WINDOW || w < SSIM_WINDOW {
                // Degenerate size: single uniform window over the image.
                let n = px as f64;
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..px {
                    mx += pv[i];
                    my += gv[i];
                }
                mx /= n;
                my /= n;
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for i in 0..px {
                    sxx += (pv[i] - mx) * (pv[i] - mx);
                    syy += (gv[i] - my) * (gv[i] - my);
                    sxy += (pv[i] - mx) * (gv[i] - my);
                }
                return score(mx, my, sxx / n, syy / n, sxy / n);
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for y0 in 0..=(h - SSIM_WINDOW) {
                for x0 in 0..=(w - SSIM_WINDOW) {
                    let (mut mx, mut my) = (0.0, 0.0);
                    let (mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0);
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let wgt = win[dy] * win[dx];
                            let i = (y0 + dy) * w + (x0 + dx);
                            mx += wgt * pv[i];
                            my += wgt * gv[i];
                            exx += wgt * pv[i] * pv[i];
                            eyy += wgt * gv[i] * gv[i];
                            exy += wgt * pv[i] * gv[i];
                        }
                    }
                    let sxx = exx - mx * mx;
                    let syy = eyy - my * my;
                    let sxy = exy - mx * my;
                    total += score(mx, my, sxx, syy, sxy);
                    count += 1;
                }
            }
            total / count as f64
        })
        .collect();
    Ok(ViewScores::from_views(per_view))
}

//! Overlap-blended tiled inference.
//!
//! The low-resolution field is cut into overlapping spatial tiles shared by
//! all views. Each tile travels to the model with a 2-pixel replicated
//! context rim (matching the edge-clamp convention of the bicubic residual
//! path, so a linear model tiled this way reproduces its full-frame output
//! exactly); the rim is cropped off the super-resolved tile and the rest is
//! blended under a Hann or uniform window with per-pixel weight
//! renormalization, which makes the blend a partition of unity by
//! construction.

use crate::error::{Error, Result};
use crate::geometry::LightField;
use crate::tensor::autodiff::no_grad;
use crate::tensor::{Elem, Tensor};

/// Replicated context pixels carried on every tile edge; covers the Keys
/// kernel radius.
const CONTEXT: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlendWindow {
    Uniform,
    Hann,
}

#[derive(Clone, Copy, Debug)]
pub struct TileSpec {
    /// Low-resolution tile size.
    pub patch: usize,
    /// Low-resolution step between tile origins.
    pub stride: usize,
    pub window: BlendWindow,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec { patch: 32, stride: 16, window: BlendWindow::Hann }
    }
}

impl TileSpec {
    fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.patch {
            return Err(Error::ConfigValue {
                key: "stride".to_string(),
                msg: format!("stride {} must be in 1..={}", self.stride, self.patch),
            });
        }
        Ok(())
    }
}

/// Tile origins covering `extent`: stride steps, with the last tile pulled
/// back flush against the end.
fn tile_starts(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    while starts.last().unwrap() + patch < extent {
        let next = (starts.last().unwrap() + stride).min(extent - patch);
        starts.push(next);
    }
    starts
}

/// Blend profile over one high-resolution tile axis. Strictly positive, so
/// renormalization never divides by zero.
fn window_profile(kind: BlendWindow, n: usize) -> Vec<f64> {
    match kind {
        BlendWindow::Uniform => vec![1.0; n],
        BlendWindow::Hann => (0..n)
            .map(|i| {
                let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
                s * s
            })
            .collect(),
    }
}

fn clamped_range(start: usize, len: usize, extent: usize) -> Vec<usize> {
    (-(CONTEXT as isize)..(len + CONTEXT) as isize)
        .map(|o| (start as isize + o).clamp(0, extent as isize - 1) as usize)
        .collect()
}

/// Runs `model` over overlapping tiles of `lr` and blends the outputs.
/// The model maps a light field to a spatially scaled light field on the
/// same view grid; the scale factor is inferred from the first tile.
pub fn epsw_infer<E: Elem>(
    model: &dyn Fn(&LightField<E>) -> Result<LightField<E>>,
    lr: &LightField<E>,
    spec: &TileSpec,
) -> Result<LightField<E>> {
    spec.validate()?;
    let (h, w) = (lr.height(), lr.width());
    if spec.patch >= h && spec.patch >= w {
        return no_grad(|| model(lr));
    }

    let ty = spec.patch.min(h);
    let tx = spec.patch.min(w);
    let ys = tile_starts(h, ty, spec.stride);
    let xs = tile_starts(w, tx, spec.stride);

    let mut scale = 0usize;
    let mut num: Vec<f64> = Vec::new();
    let mut den: Vec<f64> = Vec::new();
    let mut out_channels = 0usize;
    let mut wy = Vec::new();
    let mut wx = Vec::new();

    for &y0 in &ys {
        for &x0 in &xs {
            let rows = clamped_range(y0, ty, h);
            let cols = clamped_range(x0, tx, w);
            let tile_t = lr.tensor().gather(3, &rows)?.gather(4, &cols)?;
            let tile = lr.with_tensor(tile_t)?;
            let sr = no_grad(|| model(&tile))?;
            if sr.u() != lr.u() || sr.v() != lr.v() || sr.batch() != lr.batch() {
                return Err(Error::contract(
                    "epsw_infer",
                    "model changed the view grid or batch of a tile",
                ));
            }
            let in_h = ty + 2 * CONTEXT;
            let in_w = tx + 2 * CONTEXT;
            if scale == 0 {
                if sr.height() % in_h != 0 || sr.height() / in_h == 0 {
                    return Err(Error::contract(
                        "epsw_infer",
                        format!("tile output height {} is not a multiple of {in_h}", sr.height()),
                    ));
                }
                scale = sr.height() / in_h;
                out_channels = sr.channels();
                num = vec![0.0; lr.batch() * out_channels * lr.views() * h * scale * w * scale];
                den = vec![0.0; h * scale * w * scale];
                wy = window_profile(spec.window, ty * scale);
                wx = window_profile(spec.window, tx * scale);
            }
            if sr.height() != in_h * scale
                || sr.width() != in_w * scale
                || sr.channels() != out_channels
            {
                return Err(Error::contract(
                    "epsw_infer",
                    "model output shape changed between tiles",
                ));
            }
            let cropped = sr
                .tensor()
                .slice(3, CONTEXT * scale, ty * scale)?
                .slice(4, CONTEXT * scale, tx * scale)?;
            let data = cropped.data();
            let planes = lr.batch() * out_channels * lr.views();
            let (hh, ww) = (h * scale, w * scale);
            let (tyh, txh) = (ty * scale, tx * scale);
            for p in 0..planes {
                for dy in 0..tyh {
                    let gy = y0 * scale + dy;
                    for dx in 0..txh {
                        let gx = x0 * scale + dx;
                        let wgt = wy[dy] * wx[dx];
                        let v = data[(p * tyh + dy) * txh + dx].as_f64();
                        num[(p * hh + gy) * ww + gx] += wgt * v;
                        if p == 0 {
                            den[gy * ww + gx] += wgt;
                        }
                    }
                }
            }
        }
    }

    if den.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::contract("epsw_infer", "blend left an uncovered pixel"));
    }
    let (hh, ww) = (h * scale, w * scale);
    let planes = lr.batch() * out_channels * lr.views();
    let mut out = Vec::with_capacity(planes * hh * ww);
    for p in 0..planes {
        for i in 0..hh * ww {
            out.push(E::from_f64(num[p * hh * ww + i] / den[i]));
        }
    }
    let t = Tensor::from_vec(out, &[lr.batch(), out_channels, lr.views(), hh, ww])?;
    LightField::new(t, lr.u(), lr.v())
}

/// The accumulated (unnormalized) blend weight at every high-resolution
/// pixel, for auditing the partition of unity.
pub fn blend_weight_map(spec: &TileSpec, h: usize, w: usize, scale: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let ty = spec.patch.min(h);
    let tx = spec.patch.min(w);
    let wy = window_profile(spec.window, ty * scale);
    let wx = window_profile(spec.window, tx * scale);
    let mut den = vec![0.0; h * scale * w * scale];
    for &y0 in &tile_starts(h, ty, spec.stride) {
        for &x0 in &tile_starts(w, tx, spec.stride) {
            for dy in 0..ty * scale {
                for dx in 0..tx * scale {
                    den[(y0 * scale + dy) * w * scale + x0 * scale + dx] += wy[dy] * wx[dx];
                }
            }
        }
    }
    Ok(den)
}

//! Synthetic light fields with known epipolar geometry.
//!
//! Every layer is a texture at a fixed disparity: view (u, v) sees the
//! texture translated by d*(u - u_c, v - v_c) pixels, so EPI line slopes are
//! known by construction. Layers composite back to front with their own
//! translated opacity masks, giving view-consistent occlusions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::LightField;
use crate::tensor::ops::resample::{keys_weights, Scale};
use crate::tensor::{Elem, Tensor};

pub struct Layer {
    /// Row-major (H, W) intensities in [0, 1].
    pub texture: Vec<f64>,
    /// Pixels of shift per view step, along both spatial axes.
    pub disparity: f64,
    /// Row-major (H, W) coverage in [0, 1]; translated with the texture.
    pub opacity: Vec<f64>,
}

pub struct SyntheticScene {
    /// Back to front.
    pub layers: Vec<Layer>,
    pub u: usize,
    pub v: usize,
    /// High-resolution spatial extent per view.
    pub h: usize,
    pub w: usize,
}

/// Subpixel translation by (dy, dx) with the Keys kernel and edge-clamped
/// taps: out(y, x) = src(y - dy, x - dx). Integer offsets reproduce source
/// pixels exactly.
fn translate(src: &[f64], h: usize, w: usize, dy: f64, dx: f64) -> Vec<f64> {
    let taps = |n: usize, shift: f64| -> Vec<([usize; 4], [f64; 4])> {
        (0..n)
            .map(|i| {
                let p = i as f64 - shift;
                let i0 = p.floor();
                let wts = keys_weights(p - i0);
                let mut idx = [0usize; 4];
                for (t, slot) in idx.iter_mut().enumerate() {
                    *slot = (i0 as isize + t as isize - 1).clamp(0, n as isize - 1) as usize;
                }
                (idx, wts)
            })
            .collect()
    };
    let rows = taps(h, dy);
    let cols = taps(w, dx);
    // Vertical pass, then horizontal.
    let mut mid = vec![0.0; h * w];
    for (y, (idx, wts)) in rows.iter().enumerate() {
        for x in 0..w {
            mid[y * w + x] = (0..4).map(|t| wts[t] * src[idx[t] * w + x]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (x, (idx, wts)) in cols.iter().enumerate() {
            out[y * w + x] = (0..4).map(|t| wts[t] * mid[y * w + idx[t]]).sum();
        }
    }
    out
}

impl SyntheticScene {
    /// Renders the scene and pairs it with its bicubic-downsampled input.
    pub fn render<E: Elem>(&self, scale: usize) -> Result<(LightField<E>, LightField<E>)> {
        if self.layers.is_empty() {
            return Err(Error::contract("render", "scene has no layers"));
        }
        let px = self.h * self.w;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.texture.len() != px || layer.opacity.len() != px {
                return Err(Error::contract(
                    "render",
                    format!("layer {i} buffers do not match {}x{}", self.h, self.w),
                ));
            }
        }
        let (uc, vc) = ((self.u as f64 - 1.0) / 2.0, (self.v as f64 - 1.0) / 2.0);
        let views = self.u * self.v;
        let mut data = Vec::with_capacity(views * px);
        for iu in 0..self.u {
            for iv in 0..self.v {
                let mut canvas = vec![0.0; px];
                for layer in &self.layers {
                    let dy = layer.disparity * (iu as f64 - uc);
                    let dx = layer.disparity * (iv as f64 - vc);
                    let tex = translate(&layer.texture, self.h, self.w, dy, dx);
                    let mask = translate(&layer.opacity, self.h, self.w, dy, dx);
                    for i in 0..px {
                        let m = mask[i].clamp(0.0, 1.0);
                        canvas[i] = m * tex[i] + (1.0 - m) * canvas[i];
                    }
                }
                data.extend(canvas.iter().map(|x| x.clamp(0.0, 1.0)));
            }
        }
        let hr_t = Tensor::from_vec(
            data.iter().map(|x| E::from_f64(*x)).collect(),
            &[1, 1, views, self.h, self.w],
        )?;
        let lr_t = hr_t.bicubic2d(Scale::Down(scale))?.detach();
        Ok((
            LightField::new(hr_t, self.u, self.v)?,
            LightField::new(lr_t, self.u, self.v)?,
        ))
    }
}

/// Smoothed-noise texture: uniform noise box-blurred twice, rescaled to
/// [0, 1]. Keeps enough high-frequency content to make bicubic upsampling
/// clearly lossy while staying learnable.
fn noise_texture(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
    for _ in 0..2 {
        let src = t.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += src[yy * w + xx];
                        n += 1.0;
                    }
                }
                t[y * w + x] = acc / n;
            }
        }
    }
    let (lo, hi) = t.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = (hi - lo).max(1e-9);
    t.iter_mut().for_each(|x| *x = (*x - lo) / span);
    t
}

/// A random layered scene: an opaque textured backdrop plus one disk-masked
/// foreground layer per extra disparity, nearer layers drawn smaller.
pub fn textured_scene(
    u: usize,
    v: usize,
    h: usize,
    w: usize,
    disparities: &[f64],
    seed: u64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = vec![Layer {
        texture: noise_texture(h, w, &mut rng),
        disparity: disparities.first().copied().unwrap_or(0.0),
        opacity: vec![1.0; h * w],
    }];
    for (i, &d) in disparities.iter().skip(1).enumerate() {
        let r = (h.min(w) as f64) * 0.3 / (1.0 + i as f64 * 0.5);
        let cy = rng.random_range(0.3..0.7) * h as f64;
        let cx = rng.random_range(0.3..0.7) * w as f64;
        let opacity = (0..h * w)
            .map(|p| {
                let (y, x) = ((p / w) as f64, (p % w) as f64);
                if (y - cy).hypot(x - cx) <= r {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        layers.push(Layer { texture: noise_texture(h, w, &mut rng), disparity: d, opacity });
    }
    SyntheticScene { layers, u, v, h, w }
}

/// A single full-opacity layer whose texture is a sum of independent 1D
/// profiles, f(y) + g(x). Both spatial axes carry signal, and a per-view
/// shift along one axis never decorrelates rows sampled along the other,
/// which is what the diagonal-plane slope measurement requires.
pub fn slope_probe(u: usize, v: usize, h: usize, w: usize, d: f64, seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fy: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..0.5)).collect();
    let gx: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..0.5)).collect();
    let texture = (0..h * w).map(|p| fy[p / w] + gx[p % w]).collect();
    SyntheticScene {
        layers: vec![Layer { texture, disparity: d, opacity: vec![1.0; h * w] }],
        u,
        v,
        h,
        w,
    }
}

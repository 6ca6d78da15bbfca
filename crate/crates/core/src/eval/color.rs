//! BT.601 full-range RGB <-> YCbCr conversion, computed in f64.
//!
//! Chroma channels carry a +0.5 offset so every channel of an in-range RGB
//! input lies in [0, 1]. These conversions produce fresh leaf tensors; only
//! the luminance channel ever runs through the network.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

pub fn rgb_to_ycbcr_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = KR * r + KG * g + KB * b;
    let cb = 0.5 + (b - y) / (2.0 * (1.0 - KB));
    let cr = 0.5 + (r - y) / (2.0 * (1.0 - KR));
    (y, cb, cr)
}

pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let r = y + 2.0 * (1.0 - KR) * (cr - 0.5);
    let b = y + 2.0 * (1.0 - KB) * (cb - 0.5);
    let g = (y - KR * r - KB * b) / KG;
    (r, g, b)
}

fn channel_plane(rank: usize, shape: &[usize]) -> Result<(usize, usize)> {
    if rank < 2 {
        return Err(Error::shape(
            "color",
            "need at least (batch, channel, ..) layout".to_string(),
        ));
    }
    let plane: usize = shape[2..].iter().product();
    Ok((shape[0], plane))
}

/// Splits `(B, 3, ..)` RGB into three `(B, 1, ..)` YCbCr planes.
pub fn rgb_to_ycbcr<E: Elem>(rgb: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let sh = rgb.shape().to_vec();
    let (b, plane) = channel_plane(rgb.rank(), &sh)?;
    if sh[1] != 3 {
        return Err(Error::shape(
            "rgb_to_ycbcr",
            format!("expected 3 channels, got {}", sh[1]),
        ));
    }
    let data = rgb.data();
    let mut y = Vec::with_capacity(b * plane);
    let mut cb = Vec::with_capacity(b * plane);
    let mut cr = Vec::with_capacity(b * plane);
    for bi in 0..b {
        let base = bi * 3 * plane;
        for i in 0..plane {
            let (yy, cc, rr) = rgb_to_ycbcr_pixel(
                data[base + i].as_f64(),
                data[base + plane + i].as_f64(),
                data[base + 2 * plane + i].as_f64(),
            );
            y.push(E::from_f64(yy));
            cb.push(E::from_f64(cc));
            cr.push(E::from_f64(rr));
        }
    }
    let mut out_shape = sh;
    out_shape[1] = 1;
    Ok((
        Tensor::from_vec(y, &out_shape)?,
        Tensor::from_vec(cb, &out_shape)?,
        Tensor::from_vec(cr, &out_shape)?,
    ))
}

/// Merges three `(B, 1, ..)` planes back into `(B, 3, ..)` RGB.
pub fn ycbcr_to_rgb<E: Elem>(
    y: &Tensor<E>,
    cb: &Tensor<E>,
    cr: &Tensor<E>,
) -> Result<Tensor<E>> {
    if y.shape() != cb.shape() || y.shape() != cr.shape() {
        return Err(Error::shape(
            "ycbcr_to_rgb",
            format!(
                "plane shapes differ: {:?} / {:?} / {:?}",
                y.shape(),
                cb.shape(),
                cr.shape()
            ),
        ));
    }
    let sh = y.shape().to_vec();
    let (b, plane) = channel_plane(y.rank(), &sh)?;
    if sh[1] != 1 {
        return Err(Error::shape(
            "ycbcr_to_rgb",
            format!("expected single-channel planes, got {}", sh[1]),
        ));
    }
    let (yd, cbd, crd) = (y.data(), cb.data(), cr.data());
    let mut out = vec![E::from_f64(0.0); b * 3 * plane];
    for bi in 0..b {
        let src = bi * plane;
        let dst = bi * 3 * plane;
        for i in 0..plane {
            let (r, g, bl) = ycbcr_to_rgb_pixel(
                yd[src + i].as_f64(),
                cbd[src + i].as_f64(),
                crd[src + i].as_f64(),
            );
            out[dst + i] = E::from_f64(r);
            out[dst + plane + i] = E::from_f64(g);
            out[dst + 2 * plane + i] = E::from_f64(bl);
        }
    }
    let mut out_shape = sh;
    out_shape[1] = 3;
    Tensor::from_vec(out, &out_shape)
}

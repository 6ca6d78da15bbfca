//! Dense 3D convolution (per-axis dilation, zero same-padding, stride 1) and
//! 3x3-style depthwise 2D convolution. Parallelism is over disjoint output
//! slabs with sequential inner loops, so results are independent of thread
//! count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::shape::fmt_shape;
use crate::tensor::{BackwardFn, Elem, Tensor};

fn require_odd(op: &'static str, k: usize) -> Result<()> {
    if k % 2 == 0 {
        return Err(Error::contract(op, format!("kernel extent {} must be odd for same padding", k)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv3d_forward<E: Elem>(
    x: &[E],
    w: &[E],
    bias: Option<&[E]>,
    b: usize,
    ci: usize,
    co: usize,
    d: usize,
    h: usize,
    wd: usize,
    k: [usize; 3],
    dil: [usize; 3],
) -> Vec<E> {
    let [kd, kh, kw] = k;
    let pad = [
        (dil[0] * (kd - 1) / 2) as isize,
        (dil[1] * (kh - 1) / 2) as isize,
        (dil[2] * (kw - 1) / 2) as isize,
    ];
    let slab = d * h * wd;
    let mut out = vec![E::zero(); b * co * slab];
    out.par_chunks_mut(slab).enumerate().for_each(|(bc, chunk)| {
        let (bi, o) = (bc / co, bc % co);
        let bias_v = bias.map_or(E::zero(), |bv| bv[o]);
        for z in 0..d {
            for y in 0..h {
                for x_ in 0..wd {
                    let mut acc = bias_v;
                    for c in 0..ci {
                        let xoff = (bi * ci + c) * slab;
                        let woff = ((o * ci + c) * kd) * kh * kw;
                        for kz in 0..kd {
                            let iz = z as isize + (kz * dil[0]) as isize - pad[0];
                            if iz < 0 || iz >= d as isize {
                                continue;
                            }
                            for ky in 0..kh {
                                let iy = y as isize + (ky * dil[1]) as isize - pad[1];
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = x_ as isize + (kx * dil[2]) as isize - pad[2];
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    let xi = xoff + (iz as usize * h + iy as usize) * wd + ix as usize;
                                    let wi = woff + (kz * kh + ky) * kw + kx;
                                    acc = acc + x[xi] * w[wi];
                                }
                            }
                        }
                    }
                    chunk[(z * h + y) * wd + x_] = acc;
                }
            }
        }
    });
    out
}

impl<E: Elem> Tensor<E> {
    /// 3D convolution: input `(B,Ci,D,H,W)`, weight `(Co,Ci,kd,kh,kw)`,
    /// bias `(Co)`. Stride 1, zero padding chosen so extents are preserved
    /// (`dilation * (k-1) / 2` per axis, odd kernels only).
    pub fn conv3d(
        &self,
        weight: &Tensor<E>,
        bias: Option<&Tensor<E>>,
        dilation: [usize; 3],
    ) -> Result<Tensor<E>> {
        let mut inputs = vec![self, weight];
        if let Some(bv) = bias {
            inputs.push(bv);
        }
        Tensor::check_finite("conv3d", &inputs)?;
        if self.rank() != 5 || weight.rank() != 5 {
            return Err(Error::shape(
                "conv3d",
                format!("want input rank 5 and weight rank 5, got {} and {}",
                    fmt_shape(self.shape()), fmt_shape(weight.shape())),
            ));
        }
        let (b, ci, d, h, wd) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
            self.shape()[4],
        );
        let (co, wci, kd, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
            weight.shape()[4],
        );
        if wci != ci {
            return Err(Error::shape(
                "conv3d",
                format!("weight expects {} input channels, input has {}", wci, ci),
            ));
        }
        if let Some(bv) = bias {
            if bv.shape() != [co] {
                return Err(Error::shape("conv3d", format!("bias shape {}", fmt_shape(bv.shape()))));
            }
        }
        if dilation.contains(&0) {
            return Err(Error::contract("conv3d", "dilation must be >= 1"));
        }
        for k in [kd, kh, kw] {
            require_odd("conv3d", k)?;
        }

        let kdims = [kd, kh, kw];
        let out = conv3d_forward(
            self.data(),
            weight.data(),
            bias.map(|t| t.data()),
            b, ci, co, d, h, wd, kdims, dilation,
        );

        let x_arc = self.data_arc();
        let w_arc = weight.data_arc();
        let has_bias = bias.is_some();
        let pad = [
            (dilation[0] * (kd - 1) / 2) as isize,
            (dilation[1] * (kh - 1) / 2) as isize,
            (dilation[2] * (kw - 1) / 2) as isize,
        ];
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            let slab = d * h * wd;
            let dx = needs[0].then(|| {
                let mut dx = vec![E::zero(); b * ci * slab];
                dx.par_chunks_mut(slab).enumerate().for_each(|(bc, chunk)| {
                    let (bi, c) = (bc / ci, bc % ci);
                    // d_in[z,y,x] = sum_{co,k} g[z', y', x'] * w where the
                    // forward read (z,y,x) into output (z',y',x').
                    for o in 0..co {
                        let goff = (bi * co + o) * slab;
                        let woff = ((o * ci + c) * kd) * kh * kw;
                        for kz in 0..kd {
                            let dz = (kz * dilation[0]) as isize - pad[0];
                            for ky in 0..kh {
                                let dy = (ky * dilation[1]) as isize - pad[1];
                                for kx in 0..kw {
                                    let dxs = (kx * dilation[2]) as isize - pad[2];
                                    let wv = w_arc[woff + (kz * kh + ky) * kw + kx];
                                    for z in 0..d as isize {
                                        let oz = z - dz;
                                        if oz < 0 || oz >= d as isize {
                                            continue;
                                        }
                                        for y in 0..h as isize {
                                            let oy = y - dy;
                                            if oy < 0 || oy >= h as isize {
                                                continue;
                                            }
                                            for xx in 0..wd as isize {
                                                let ox = xx - dxs;
                                                if ox < 0 || ox >= wd as isize {
                                                    continue;
                                                }
                                                let gi = goff
                                                    + (oz as usize * h + oy as usize) * wd
                                                    + ox as usize;
                                                let di = (z as usize * h + y as usize) * wd + xx as usize;
                                                chunk[di] = chunk[di] + g[gi] * wv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                dx
            });
            let dw = needs[1].then(|| {
                let kvol = kd * kh * kw;
                let mut dw = vec![E::zero(); co * ci * kvol];
                dw.par_chunks_mut(ci * kvol).enumerate().for_each(|(o, chunk)| {
                    for bi in 0..b {
                        let goff = (bi * co + o) * slab;
                        for c in 0..ci {
                            let xoff = (bi * ci + c) * slab;
                            for kz in 0..kd {
                                let dz = (kz * dilation[0]) as isize - pad[0];
                                for ky in 0..kh {
                                    let dy = (ky * dilation[1]) as isize - pad[1];
                                    for kx in 0..kw {
                                        let dxs = (kx * dilation[2]) as isize - pad[2];
                                        let mut acc = E::zero();
                                        for z in 0..d as isize {
                                            let iz = z + dz;
                                            if iz < 0 || iz >= d as isize {
                                                continue;
                                            }
                                            for y in 0..h as isize {
                                                let iy = y + dy;
                                                if iy < 0 || iy >= h as isize {
                                                    continue;
                                                }
                                                for xx in 0..wd as isize {
                                                    let ix = xx + dxs;
                                                    if ix < 0 || ix >= wd as isize {
                                                        continue;
                                                    }
                                                    let gi = goff + (z as usize * h + y as usize) * wd + xx as usize;
                                                    let xi = xoff + (iz as usize * h + iy as usize) * wd + ix as usize;
                                                    acc = acc + g[gi] * x_arc[xi];
                                                }
                                            }
                                        }
                                        let wi = (c * kd + kz) * kh * kw + ky * kw + kx;
                                        chunk[wi] = chunk[wi] + acc;
                                    }
                                }
                            }
                        }
                    }
                });
                dw
            });
            let db = (has_bias && needs[2]).then(|| {
                let mut db = vec![E::zero(); co];
                for bi in 0..b {
                    for (o, dbo) in db.iter_mut().enumerate() {
                        let goff = (bi * co + o) * slab;
                        for v in &g[goff..goff + slab] {
                            *dbo = *dbo + *v;
                        }
                    }
                }
                db
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(db);
            }
            grads
        });

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bv) = bias {
            parents.push(bv.clone());
        }
        Ok(Tensor::from_op(vec![b, co, d, h, wd], out, parents, backward))
    }

    /// Depthwise 2D convolution: input `(N,C,P,Q)`, weight `(C,kh,kw)`,
    /// bias `(C)`. Each channel is filtered by its own kernel; zero same
    /// padding, stride 1.
    pub fn dwconv2d(&self, weight: &Tensor<E>, bias: Option<&Tensor<E>>) -> Result<Tensor<E>> {
        let mut inputs = vec![self, weight];
        if let Some(bv) = bias {
            inputs.push(bv);
        }
        Tensor::check_finite("dwconv2d", &inputs)?;
        if self.rank() != 4 || weight.rank() != 3 {
            return Err(Error::shape(
                "dwconv2d",
                format!("want input rank 4 and weight rank 3, got {} and {}",
                    fmt_shape(self.shape()), fmt_shape(weight.shape())),
            ));
        }
        let (n, c, p, q) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (wc, kh, kw) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
        if wc != c {
            return Err(Error::shape("dwconv2d", format!("{} kernels for {} channels", wc, c)));
        }
        if let Some(bv) = bias {
            if bv.shape() != [c] {
                return Err(Error::shape("dwconv2d", format!("bias shape {}", fmt_shape(bv.shape()))));
            }
        }
        require_odd("dwconv2d", kh)?;
        require_odd("dwconv2d", kw)?;
        let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);

        let xd = self.data();
        let wd_ = weight.data();
        let slab = p * q;
        let mut out = vec![E::zero(); n * c * slab];
        out.par_chunks_mut(slab).enumerate().for_each(|(nc, chunk)| {
            let ch = nc % c;
            let bias_v = bias.map_or(E::zero(), |bv| bv.data()[ch]);
            let xoff = nc * slab;
            let woff = ch * kh * kw;
            for y in 0..p {
                for x_ in 0..q {
                    let mut acc = bias_v;
                    for ky in 0..kh {
                        let iy = y as isize + ky as isize - ph;
                        if iy < 0 || iy >= p as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = x_ as isize + kx as isize - pw;
                            if ix < 0 || ix >= q as isize {
                                continue;
                            }
                            acc = acc + xd[xoff + iy as usize * q + ix as usize] * wd_[woff + ky * kw + kx];
                        }
                    }
                    chunk[y * q + x_] = acc;
                }
            }
        });

        let x_arc = self.data_arc();
        let w_arc = weight.data_arc();
        let has_bias = bias.is_some();
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            let dx = needs[0].then(|| {
                let mut dx = vec![E::zero(); n * c * slab];
                dx.par_chunks_mut(slab).enumerate().for_each(|(nc, chunk)| {
                    let ch = nc % c;
                    let goff = nc * slab;
                    let woff = ch * kh * kw;
                    for ky in 0..kh {
                        let dy = ky as isize - ph;
                        for kx in 0..kw {
                            let dxs = kx as isize - pw;
                            let wv = w_arc[woff + ky * kw + kx];
                            for y in 0..p as isize {
                                let oy = y - dy;
                                if oy < 0 || oy >= p as isize {
                                    continue;
                                }
                                for x_ in 0..q as isize {
                                    let ox = x_ - dxs;
                                    if ox < 0 || ox >= q as isize {
                                        continue;
                                    }
                                    let di = y as usize * q + x_ as usize;
                                    chunk[di] = chunk[di] + g[goff + oy as usize * q + ox as usize] * wv;
                                }
                            }
                        }
                    }
                });
                dx
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![E::zero(); c * kh * kw];
                dw.par_chunks_mut(kh * kw).enumerate().for_each(|(ch, chunk)| {
                    for ni in 0..n {
                        let base = (ni * c + ch) * slab;
                        for ky in 0..kh {
                            let dy = ky as isize - ph;
                            for kx in 0..kw {
                                let dxs = kx as isize - pw;
                                let mut acc = E::zero();
                                for y in 0..p as isize {
                                    let iy = y + dy;
                                    if iy < 0 || iy >= p as isize {
                                        continue;
                                    }
                                    for x_ in 0..q as isize {
                                        let ix = x_ + dxs;
                                        if ix < 0 || ix >= q as isize {
                                            continue;
                                        }
                                        acc = acc
                                            + g[base + y as usize * q + x_ as usize]
                                                * x_arc[base + iy as usize * q + ix as usize];
                                    }
                                }
                                chunk[ky * kw + kx] = chunk[ky * kw + kx] + acc;
                            }
                        }
                    }
                });
                dw
            });
            let db = (has_bias && needs[2]).then(|| {
                let mut db = vec![E::zero(); c];
                for ni in 0..n {
                    for (ch, dbo) in db.iter_mut().enumerate() {
                        let base = (ni * c + ch) * slab;
                        for v in &g[base..base + slab] {
                            *dbo = *dbo + *v;
                        }
                    }
                }
                db
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(db);
            }
            grads
        });

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bv) = bias {
            parents.push(bv.clone());
        }
        Ok(Tensor::from_op(vec![n, c, p, q], out, parents, backward))
    }
}

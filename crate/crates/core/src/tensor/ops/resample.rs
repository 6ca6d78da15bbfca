//! Differentiable separable bicubic resampling over the last two axes.
//!
//! Cubic convolution with the Keys kernel (a = -0.5), edge-clamped taps, and
//! the half-pixel-center source mapping `src = (dst + 0.5)/f - 0.5`. The op
//! is linear in its input, so the backward pass scatters the same tap
//! weights transposed. Factor 1 reproduces the input bit for bit, which the
//! residual-identity guarantee of the model relies on.

use crate::error::{Error, Result};
use crate::tensor::{BackwardFn, Elem, Tensor};

/// Integer resampling factor for one call (both spatial axes share it).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Up(usize),
    Down(usize),
}

impl Scale {
    pub fn ratio(self) -> f64 {
        match self {
            Scale::Up(f) => f as f64,
            Scale::Down(f) => 1.0 / f as f64,
        }
    }

    fn out_len(self, n: usize) -> Result<usize> {
        match self {
            Scale::Up(0) | Scale::Down(0) => Err(Error::contract("bicubic", "factor must be >= 1")),
            Scale::Up(f) => Ok(n * f),
            Scale::Down(f) => {
                if n % f != 0 || n == 0 {
                    Err(Error::contract(
                        "bicubic",
                        format!("extent {} not divisible by downscale factor {}", n, f),
                    ))
                } else {
                    Ok(n / f)
                }
            }
        }
    }
}

/// Keys cubic kernel, a = -0.5.
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Tap weights for the four source samples `floor(src)-1 .. floor(src)+2`
/// at fractional offset `fr` in `[0,1)`.
pub fn keys_weights(fr: f64) -> [f64; 4] {
    [
        keys_kernel(1.0 + fr),
        keys_kernel(fr),
        keys_kernel(1.0 - fr),
        keys_kernel(2.0 - fr),
    ]
}

/// Per-output-index tap positions (edge-clamped) and weights.
fn axis_plan(n_in: usize, n_out: usize, ratio: f64) -> Vec<([usize; 4], [f64; 4])> {
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) / ratio - 0.5;
            let i0 = src.floor();
            let fr = src - i0;
            let w = keys_weights(fr);
            let mut idx = [0usize; 4];
            for (t, slot) in idx.iter_mut().enumerate() {
                let p = i0 as isize + t as isize - 1;
                *slot = p.clamp(0, n_in as isize - 1) as usize;
            }
            (idx, w)
        })
        .collect()
}

/// Resamples one axis of a logically (pre, N, post) tensor.
fn resample_axis<E: Elem>(x: &Tensor<E>, axis_from_end: usize, scale: Scale) -> Result<Tensor<E>> {
    Tensor::check_finite("bicubic", &[x])?;
    let rank = x.rank();
    if rank < 2 {
        return Err(Error::shape("bicubic", "input must be rank >= 2"));
    }
    let axis = rank - 1 - axis_from_end;
    let n_in = x.shape()[axis];
    if n_in == 0 {
        return Err(Error::contract("bicubic", "empty axis"));
    }
    let n_out = scale.out_len(n_in)?;
    let plan = axis_plan(n_in, n_out, scale.ratio());

    let pre: usize = x.shape()[..axis].iter().product();
    let post: usize = x.shape()[axis + 1..].iter().product();
    let xd = x.data();
    let mut out = vec![E::zero(); pre * n_out * post];
    for o in 0..pre {
        for (i, (idx, w)) in plan.iter().enumerate() {
            let dst = (o * n_out + i) * post;
            for t in 0..4 {
                let wt = E::from_f64(w[t]);
                let src = (o * n_in + idx[t]) * post;
                for p in 0..post {
                    out[dst + p] = out[dst + p] + wt * xd[src + p];
                }
            }
        }
    }

    let mut out_shape = x.shape().to_vec();
    out_shape[axis] = n_out;
    let plan_bw = plan;
    let backward: BackwardFn<E> = Box::new(move |g, needs| {
        vec![needs[0].then(|| {
            let mut dx = vec![E::zero(); pre * n_in * post];
            for o in 0..pre {
                for (i, (idx, w)) in plan_bw.iter().enumerate() {
                    let src = (o * n_out + i) * post;
                    for t in 0..4 {
                        let wt = E::from_f64(w[t]);
                        let dst = (o * n_in + idx[t]) * post;
                        for p in 0..post {
                            dx[dst + p] = dx[dst + p] + wt * g[src + p];
                        }
                    }
                }
            }
            dx
        })]
    });
    Ok(Tensor::from_op(out_shape, out, vec![x.clone()], backward))
}

impl<E: Elem> Tensor<E> {
    /// Bicubic resampling of the last two axes by the same integer factor.
    pub fn bicubic2d(&self, scale: Scale) -> Result<Tensor<E>> {
        let w = resample_axis(self, 0, scale)?;
        resample_axis(&w, 1, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::autodiff::backward;
    use crate::tensor::test_util::assert_close;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..100 {
            let fr = i as f64 / 100.0;
            let s: f64 = keys_weights(fr).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "fr={}: sum={}", fr, s);
        }
    }

    #[test]
    fn factor_one_is_bit_exact_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::rand_uniform(&[2, 5, 7], 0.0, 1.0, &mut rng);
        let y = x.bicubic2d(Scale::Up(1)).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn constant_image_stays_constant() {
        let x = Tensor::<f64>::full(0.37, &[1, 6, 6]);
        let y = x.bicubic2d(Scale::Up(4)).unwrap();
        assert_eq!(y.shape(), &[1, 24, 24]);
        for &v in y.data() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_ramp_stays_linear_in_the_interior() {
        // f(y, x) = x over a 1x1x16 row; x2 upsample must reproduce the ramp
        // up to edge effects (first/last couple of samples are clamped).
        let n = 16;
        let x = Tensor::<f64>::from_vec((0..n).map(|i| i as f64).collect(), &[1, 1, n]).unwrap();
        let y = resample_axis(&x, 0, Scale::Up(2)).unwrap();
        for i in 4..2 * n - 4 {
            let src = (i as f64 + 0.5) / 2.0 - 0.5;
            assert!(
                (y.data()[i] - src).abs() < 1e-9,
                "i={} got {} want {}",
                i,
                y.data()[i],
                src
            );
        }
    }

    #[test]
    fn down_then_shape_checks() {
        let x = Tensor::<f64>::ones(&[1, 8, 12]);
        let y = x.bicubic2d(Scale::Down(4)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 3]);
        assert!(Tensor::<f64>::ones(&[1, 9, 12]).bicubic2d(Scale::Down(4)).is_err());
    }

    #[test]
    fn grad_is_transpose() {
        // For a linear op y = A x, d(sum w.y)/dx must equal A^T w.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::rand_uniform(&[1, 4, 4], -1.0, 1.0, &mut rng).var();
        let wvec = Tensor::<f64>::rand_uniform(&[1, 8, 8], -1.0, 1.0, &mut rng);
        let y = x.bicubic2d(Scale::Up(2)).unwrap();
        let loss = y.mul(&wvec).unwrap().sum_all().unwrap();
        let g = backward(&loss).unwrap();
        // Finite differences, exact to first order because the op is linear.
        let eps = 1e-6;
        let ga = g.get(&x).unwrap();
        for j in [0usize, 5, 10, 15] {
            let mut plus = x.data().to_vec();
            plus[j] += eps;
            let xp = Tensor::<f64>::from_vec(plus, &[1, 4, 4]).unwrap();
            let lp = xp.bicubic2d(Scale::Up(2)).unwrap().mul(&wvec).unwrap().sum_all().unwrap();
            let mut minus = x.data().to_vec();
            minus[j] -= eps;
            let xm = Tensor::<f64>::from_vec(minus, &[1, 4, 4]).unwrap();
            let lm = xm.bicubic2d(Scale::Up(2)).unwrap().mul(&wvec).unwrap().sum_all().unwrap();
            let fd = (lp.item().unwrap() - lm.item().unwrap()) / (2.0 * eps);
            assert!((ga[j] - fd).abs() < 1e-8, "elem {}: {} vs {}", j, ga[j], fd);
        }
    }

    #[test]
    fn upsample_then_crop_matches_margin_extraction() {
        // Cutting a tile with 2 source pixels of clamped margin and cropping
        // the scaled margin afterwards reproduces the direct result exactly.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let f = 4;
        let img = Tensor::<f64>::rand_uniform(&[1, 1, n], 0.0, 1.0, &mut rng);
        let full = resample_axis(&img, 0, Scale::Up(f)).unwrap();
        let m = 2;
        for start in [0usize, 3, 8] {
            let len = 4usize;
            // Clamped margin extraction.
            let take: Vec<f64> = (start as isize - m as isize..(start + len + m) as isize)
                .map(|i| img.data()[i.clamp(0, n as isize - 1) as usize])
                .collect();
            let tile = Tensor::<f64>::from_vec(take, &[1, 1, len + 2 * m]).unwrap();
            let up = resample_axis(&tile, 0, Scale::Up(f)).unwrap();
            let got = &up.data()[m * f..(m + len) * f];
            let want = &full.data()[start * f..(start + len) * f];
            assert_close(got, want, 0.0);
        }
    }
}

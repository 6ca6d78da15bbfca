//! Pointwise binary ops (with numpy-style broadcasting) and unary maps.

use std::sync::Arc;

use crate::error::Result;
use crate::tensor::shape::{broadcast_shape, broadcast_strides, BroadcastIter};
use crate::tensor::{BackwardFn, Elem, Tensor};

/// Broadcasting binary op. `grad_a`/`grad_b` give the local derivatives
/// ∂out/∂a and ∂out/∂b at one element pair; the backward pass scatter-adds
/// them through the broadcast, so reduced axes accumulate automatically.
fn binary<E, F, Ga, Gb>(
    op: &'static str,
    a: &Tensor<E>,
    b: &Tensor<E>,
    fwd: F,
    grad_a: Ga,
    grad_b: Gb,
) -> Result<Tensor<E>>
where
    E: Elem,
    F: Fn(E, E) -> E,
    Ga: Fn(E, E) -> E + Send + Sync + 'static,
    Gb: Fn(E, E) -> E + Send + Sync + 'static,
{
    Tensor::check_finite(op, &[a, b])?;
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    let ad = a.data();
    let bd = b.data();

    let data: Vec<E> = if a.shape() == b.shape() {
        ad.iter().zip(bd).map(|(&x, &y)| fwd(x, y)).collect()
    } else {
        let sa = broadcast_strides(a.shape(), &out_shape);
        let sb = broadcast_strides(b.shape(), &out_shape);
        BroadcastIter::new(&out_shape, sa, sb)
            .map(|(ia, ib)| fwd(ad[ia], bd[ib]))
            .collect()
    };

    let a_shape = a.shape().to_vec();
    let b_shape = b.shape().to_vec();
    let shape_bw = out_shape.clone();
    let a_arc = Arc::new(ad.to_vec());
    let b_arc = Arc::new(bd.to_vec());
    let backward: BackwardFn<E> = Box::new(move |g, needs| {
        let same = a_shape == b_shape;
        let mut da = needs[0].then(|| vec![E::zero(); a_arc.len()]);
        let mut db = needs[1].then(|| vec![E::zero(); b_arc.len()]);
        if same {
            for (i, &gi) in g.iter().enumerate() {
                if let Some(da) = da.as_mut() {
                    da[i] = da[i] + gi * grad_a(a_arc[i], b_arc[i]);
                }
                if let Some(db) = db.as_mut() {
                    db[i] = db[i] + gi * grad_b(a_arc[i], b_arc[i]);
                }
            }
        } else {
            let sa = broadcast_strides(&a_shape, &shape_bw);
            let sb = broadcast_strides(&b_shape, &shape_bw);
            for (i, (ia, ib)) in BroadcastIter::new(&shape_bw, sa, sb).enumerate() {
                let gi = g[i];
                if let Some(da) = da.as_mut() {
                    da[ia] = da[ia] + gi * grad_a(a_arc[ia], b_arc[ib]);
                }
                if let Some(db) = db.as_mut() {
                    db[ib] = db[ib] + gi * grad_b(a_arc[ia], b_arc[ib]);
                }
            }
        }
        vec![da, db]
    });

    Ok(Tensor::from_op(out_shape, data, vec![a.clone(), b.clone()], backward))
}

/// Unary map. `dfn(x, y)` is the derivative at input `x` with output `y`.
fn unary<E, F, D>(op: &'static str, x: &Tensor<E>, fwd: F, dfn: D) -> Result<Tensor<E>>
where
    E: Elem,
    F: Fn(E) -> E,
    D: Fn(E, E) -> E + Send + Sync + 'static,
{
    Tensor::check_finite(op, &[x])?;
    let data: Vec<E> = x.data().iter().map(|&v| fwd(v)).collect();
    let x_arc = Arc::new(x.data().to_vec());
    let y_arc = Arc::new(data.clone());
    let backward: BackwardFn<E> = Box::new(move |g, needs| {
        if !needs[0] {
            return vec![None];
        }
        let dx = g
            .iter()
            .zip(x_arc.iter().zip(y_arc.iter()))
            .map(|(&gi, (&xi, &yi))| gi * dfn(xi, yi))
            .collect();
        vec![Some(dx)]
    });
    Ok(Tensor::from_op(x.shape().to_vec(), data, vec![x.clone()], backward))
}

impl<E: Elem> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary("add", self, other, |a, b| a + b, |_, _| E::one(), |_, _| E::one())
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary("sub", self, other, |a, b| a - b, |_, _| E::one(), |_, _| -E::one())
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary("mul", self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn scale(&self, s: f64) -> Result<Tensor<E>> {
        let c = E::from_f64(s);
        unary("scale", self, |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor<E>> {
        let c = E::from_f64(s);
        unary("add_scalar", self, |x| x + c, |_, _| E::one())
    }

    pub fn square(&self) -> Result<Tensor<E>> {
        let two = E::from_f64(2.0);
        unary("square", self, |x| x * x, move |x, _| two * x)
    }

    pub fn sqrt_elem(&self) -> Result<Tensor<E>> {
        let half = E::from_f64(0.5);
        unary("sqrt", self, |x| x.sqrt(), move |_, y| half / y)
    }

    pub fn abs_elem(&self) -> Result<Tensor<E>> {
        unary("abs", self, |x| x.abs(), |x, _| {
            if x >= E::zero() {
                E::one()
            } else {
                -E::one()
            }
        })
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        unary(
            "sigmoid",
            self,
            |x| E::one() / (E::one() + (-x).exp()),
            |_, y| y * (E::one() - y),
        )
    }

    /// Gaussian error linear unit, tanh approximation:
    /// 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
    pub fn gelu(&self) -> Result<Tensor<E>> {
        let k = E::from_f64((2.0 / std::f64::consts::PI).sqrt());
        let c = E::from_f64(0.044715);
        let half = E::from_f64(0.5);
        let three = E::from_f64(3.0);
        unary(
            "gelu",
            self,
            move |x| {
                let u = k * (x + c * x * x * x);
                half * x * (E::one() + u.tanh())
            },
            move |x, _| {
                let u = k * (x + c * x * x * x);
                let t = u.tanh();
                let du = k * (E::one() + three * c * x * x);
                half * (E::one() + t) + half * x * (E::one() - t * t) * du
            },
        )
    }

    /// Clamps to `[lo, hi]`, with pass-through gradient on the closed
    /// interval and zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor<E>> {
        let l = E::from_f64(lo);
        let h = E::from_f64(hi);
        unary(
            "clamp",
            self,
            move |x| x.max(l).min(h),
            move |x, _| {
                if x >= l && x <= h {
                    E::one()
                } else {
                    E::zero()
                }
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::autodiff::backward;
    use crate::tensor::test_util::assert_close;

    #[test]
    fn add_broadcasts_and_reduces_grad() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3])
            .unwrap()
            .var();
        let b = Tensor::<f64>::from_vec(vec![10.0, 20.0, 30.0], &[3]).unwrap().var();
        let y = a.add(&b).unwrap();
        assert_close(y.data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0], 0.0);
        let loss = y.sum_all().unwrap();
        let g = backward(&loss).unwrap();
        assert_close(g.get(&a).unwrap(), &[1.0; 6], 0.0);
        // Each b element feeds two output rows.
        assert_close(g.get(&b).unwrap(), &[2.0, 2.0, 2.0], 0.0);
    }

    #[test]
    fn mul_grad_uses_counterpart() {
        let a = Tensor::<f64>::from_vec(vec![2.0, -3.0], &[2]).unwrap().var();
        let b = Tensor::<f64>::from_vec(vec![5.0, 7.0], &[2]).unwrap().var();
        let g = backward(&a.mul(&b).unwrap().sum_all().unwrap()).unwrap();
        assert_close(g.get(&a).unwrap(), &[5.0, 7.0], 0.0);
        assert_close(g.get(&b).unwrap(), &[2.0, -3.0], 0.0);
    }

    #[test]
    fn gelu_reference_values() {
        // Reference values computed from the tanh-approximation formula.
        let x = Tensor::<f64>::from_vec(vec![-2.0, -0.5, 0.0, 0.5, 2.0], &[5]).unwrap();
        let y = x.gelu().unwrap();
        let want = [
            -0.04540230591222494,
            -0.15428599017485606,
            0.0,
            0.34571400982514394,
            1.954597694087775,
        ];
        assert_close(y.data(), &want, 1e-12);
    }

    #[test]
    fn clamp_zeroes_grad_outside() {
        let x = Tensor::<f64>::from_vec(vec![-0.5, 0.25, 1.5], &[3]).unwrap().var();
        let y = x.clamp(0.0, 1.0).unwrap();
        assert_close(y.data(), &[0.0, 0.25, 1.0], 0.0);
        let g = backward(&y.sum_all().unwrap()).unwrap();
        assert_close(g.get(&x).unwrap(), &[0.0, 1.0, 0.0], 0.0);
    }

    #[test]
    fn checked_mode_rejects_nan_operand() {
        let a = Tensor::<f64>::from_vec(vec![f64::INFINITY], &[1]).unwrap();
        let b = Tensor::<f64>::ones(&[1]);
        assert!(a.add(&b).is_err());
    }
}

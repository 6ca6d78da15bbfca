//! Sum and mean reductions over a set of axes.

use crate::error::{Error, Result};
use crate::tensor::shape::{fmt_shape, strides};
use crate::tensor::{BackwardFn, Elem, Tensor};

/// For every input flat index, the flat index of the output cell it reduces
/// into. Reduced axes contribute stride 0.
fn reduction_map(in_shape: &[usize], reduce: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut out_shape: Vec<usize> = Vec::new();
    for (d, &r) in in_shape.iter().zip(reduce) {
        if !r {
            out_shape.push(*d);
        }
    }
    let out_strides = strides(&out_shape);
    let mut map = vec![0usize; in_shape.len()];
    let mut oi = 0;
    for (ax, &r) in reduce.iter().enumerate() {
        if !r {
            map[ax] = out_strides[oi];
            oi += 1;
        }
    }
    (out_shape, map)
}

fn sum_impl<E: Elem>(
    op: &'static str,
    x: &Tensor<E>,
    axes: &[usize],
    keepdim: bool,
    scale: f64,
) -> Result<Tensor<E>> {
    Tensor::check_finite(op, &[x])?;
    let rank = x.rank();
    let mut reduce = vec![false; rank];
    for &ax in axes {
        if ax >= rank {
            return Err(Error::shape(
                op,
                format!("axis {} out of range for {}", ax, fmt_shape(x.shape())),
            ));
        }
        if reduce[ax] {
            return Err(Error::contract(op, format!("axis {} repeated", ax)));
        }
        reduce[ax] = true;
    }

    let (out_shape, map) = reduction_map(x.shape(), &reduce);
    let mut data = vec![E::zero(); out_shape.iter().product()];
    // Walk input row-major, carrying the mapped output offset.
    let in_shape = x.shape().to_vec();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &v in x.data() {
        data[off] = data[off] + v;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += map[ax];
            if idx[ax] < in_shape[ax] {
                break;
            }
            off -= map[ax] * in_shape[ax];
            idx[ax] = 0;
        }
    }
    let s = E::from_f64(scale);
    if scale != 1.0 {
        for v in &mut data {
            *v = *v * s;
        }
    }

    let final_shape = if keepdim {
        in_shape
            .iter()
            .zip(&reduce)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect()
    } else {
        out_shape
    };

    let shape_bw = x.shape().to_vec();
    let map_bw = map;
    let backward: BackwardFn<E> = Box::new(move |g, needs| {
        if !needs[0] {
            return vec![None];
        }
        let mut dx = vec![E::zero(); shape_bw.iter().product()];
        let mut idx = vec![0usize; shape_bw.len()];
        let mut off = 0usize;
        for v in &mut dx {
            *v = g[off] * s;
            for ax in (0..shape_bw.len()).rev() {
                idx[ax] += 1;
                off += map_bw[ax];
                if idx[ax] < shape_bw[ax] {
                    break;
                }
                off -= map_bw[ax] * shape_bw[ax];
                idx[ax] = 0;
            }
        }
        vec![Some(dx)]
    });

    Ok(Tensor::from_op(final_shape, data, vec![x.clone()], backward))
}

impl<E: Elem> Tensor<E> {
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<E>> {
        sum_impl("sum_axes", self, axes, keepdim, 1.0)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<E>> {
        let count: usize = axes
            .iter()
            .map(|&ax| self.shape().get(ax).copied().unwrap_or(1))
            .product();
        sum_impl("mean_axes", self, axes, keepdim, 1.0 / count.max(1) as f64)
    }

    /// Scalar sum of all elements.
    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        sum_impl("sum_all", self, &axes, false, 1.0)
    }

    /// Scalar mean of all elements.
    pub fn mean_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        sum_impl("mean_all", self, &axes, false, 1.0 / self.numel().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::autodiff::backward;
    use crate::tensor::test_util::assert_close;

    #[test]
    fn sum_over_middle_axis() {
        let x = Tensor::<f64>::from_vec((0..24).map(|v| v as f64).collect(), &[2, 3, 4]).unwrap();
        let y = x.sum_axes(&[1], false).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        // out[b,w] = sum_h x[b,h,w]
        assert_close(
            y.data(),
            &[12.0, 15.0, 18.0, 21.0, 48.0, 51.0, 54.0, 57.0],
            0.0,
        );
        let k = x.sum_axes(&[1], true).unwrap();
        assert_eq!(k.shape(), &[2, 1, 4]);
    }

    #[test]
    fn mean_grad_is_uniform() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap().var();
        let g = backward(&x.mean_all().unwrap()).unwrap();
        assert_close(g.get(&x).unwrap(), &[0.25; 4], 1e-15);
    }

    #[test]
    fn multi_axis_reduction() {
        let x = Tensor::<f64>::from_vec((0..24).map(|v| v as f64).collect(), &[2, 3, 4]).unwrap();
        let y = x.sum_axes(&[0, 2], false).unwrap();
        assert_eq!(y.shape(), &[3]);
        assert_close(y.data(), &[60.0, 92.0, 124.0], 0.0);
        assert!(x.sum_axes(&[0, 0], false).is_err());
        assert!(x.sum_axes(&[3], false).is_err());
    }
}

//! Data-movement ops: reshape, permute, concat, slice, and indexed
//! gather/scatter along one axis. All are linear, so each backward pass is
//! the transposed movement of the forward pass.

use crate::error::{Error, Result};
use crate::tensor::shape::{fmt_shape, numel, split_at_axis, strides};
use crate::tensor::{BackwardFn, Elem, Tensor};

/// Copies `src` rearranged by `perm` into a fresh row-major buffer.
fn permute_data<E: Elem>(src: &[E], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<E>) {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    // Stride to advance in the source when output axis i increments.
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..src.len() {
        out.push(src[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= step[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

impl<E: Elem> Tensor<E> {
    /// Reinterprets the buffer under a new shape with the same element count.
    /// Zero-copy: the data is shared with the input.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<E>> {
        if numel(new_shape) != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{} -> {}", fmt_shape(self.shape()), fmt_shape(new_shape)),
            ));
        }
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| g.to_vec())]
        });
        Ok(Tensor::from_op_shared(
            new_shape.to_vec(),
            self.data_arc(),
            vec![self.clone()],
            backward,
        ))
    }

    /// Reorders axes; `perm[i]` names the input axis that becomes output
    /// axis `i`. The result is materialized in row-major order.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<E>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::contract(
                "permute",
                format!("{:?} is not a permutation of 0..{}", perm, rank),
            ));
        }
        let (out_shape, data) = permute_data(self.data(), self.shape(), perm);

        // Backward permutes the gradient by the inverse permutation.
        let mut inv = vec![0usize; rank];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let g_shape = out_shape.clone();
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| permute_data(g, &g_shape, &inv).1)]
        });
        Ok(Tensor::from_op(out_shape, data, vec![self.clone()], backward))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor<E>], axis: usize) -> Result<Tensor<E>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat", "empty input list"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::shape("concat", format!("axis {} out of range", axis)));
        }
        let mut total_ext = 0usize;
        for p in parts {
            Tensor::check_finite("concat", &[p])?;
            if p.rank() != rank {
                return Err(Error::shape("concat", "rank mismatch"));
            }
            for ax in 0..rank {
                if ax != axis && p.shape()[ax] != first.shape()[ax] {
                    return Err(Error::shape(
                        "concat",
                        format!("{} vs {}", fmt_shape(p.shape()), fmt_shape(first.shape())),
                    ));
                }
            }
            total_ext += p.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total_ext;
        let (pre, _, post) = split_at_axis(&out_shape, axis);

        let mut data = vec![E::zero(); pre * total_ext * post];
        let mut offset_ext = 0usize;
        let mut spans = Vec::with_capacity(parts.len());
        for p in parts {
            let ext = p.shape()[axis];
            for o in 0..pre {
                let src = &p.data()[o * ext * post..(o + 1) * ext * post];
                let dst_start = (o * total_ext + offset_ext) * post;
                data[dst_start..dst_start + ext * post].copy_from_slice(src);
            }
            spans.push((offset_ext, ext));
            offset_ext += ext;
        }

        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            spans
                .iter()
                .zip(needs)
                .map(|(&(start, ext), &need)| {
                    need.then(|| {
                        let mut dp = vec![E::zero(); pre * ext * post];
                        for o in 0..pre {
                            let src_start = (o * total_ext + start) * post;
                            dp[o * ext * post..(o + 1) * ext * post]
                                .copy_from_slice(&g[src_start..src_start + ext * post]);
                        }
                        dp
                    })
                })
                .collect()
        });
        let parents = parts.iter().map(|&p| p.clone()).collect();
        Ok(Tensor::from_op(out_shape, data, parents, backward))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<E>> {
        Tensor::check_finite("slice", &[self])?;
        if axis >= self.rank() {
            return Err(Error::shape("slice", format!("axis {} out of range", axis)));
        }
        let ext = self.shape()[axis];
        if start + len > ext {
            return Err(Error::shape(
                "slice",
                format!("range {}..{} exceeds extent {}", start, start + len, ext),
            ));
        }
        let (pre, _, post) = split_at_axis(self.shape(), axis);
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        let mut data = vec![E::zero(); pre * len * post];
        for o in 0..pre {
            let src_start = (o * ext + start) * post;
            data[o * len * post..(o + 1) * len * post]
                .copy_from_slice(&self.data()[src_start..src_start + len * post]);
        }
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| {
                let mut dx = vec![E::zero(); pre * ext * post];
                for o in 0..pre {
                    let dst_start = (o * ext + start) * post;
                    dx[dst_start..dst_start + len * post]
                        .copy_from_slice(&g[o * len * post..(o + 1) * len * post]);
                }
                dx
            })]
        });
        Ok(Tensor::from_op(out_shape, data, vec![self.clone()], backward))
    }

    /// Selects `indices` along `axis`: `out[.., i, ..] = x[.., indices[i], ..]`.
    /// Repeated indices are allowed; their gradients accumulate.
    pub fn gather(&self, axis: usize, indices: &[usize]) -> Result<Tensor<E>> {
        Tensor::check_finite("gather", &[self])?;
        if axis >= self.rank() {
            return Err(Error::shape("gather", format!("axis {} out of range", axis)));
        }
        let ext = self.shape()[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= ext) {
            return Err(Error::contract(
                "gather",
                format!("index {} out of range for extent {}", bad, ext),
            ));
        }
        let (pre, _, post) = split_at_axis(self.shape(), axis);
        let n = indices.len();
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = n;
        let mut data = vec![E::zero(); pre * n * post];
        for o in 0..pre {
            for (i, &src_i) in indices.iter().enumerate() {
                let src_start = (o * ext + src_i) * post;
                let dst_start = (o * n + i) * post;
                data[dst_start..dst_start + post]
                    .copy_from_slice(&self.data()[src_start..src_start + post]);
            }
        }
        let idx = indices.to_vec();
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| {
                let mut dx = vec![E::zero(); pre * ext * post];
                for o in 0..pre {
                    for (i, &src_i) in idx.iter().enumerate() {
                        let dst = (o * ext + src_i) * post;
                        let src = (o * idx.len() + i) * post;
                        for p in 0..post {
                            dx[dst + p] = dx[dst + p] + g[src + p];
                        }
                    }
                }
                dx
            })]
        });
        Ok(Tensor::from_op(out_shape, data, vec![self.clone()], backward))
    }

    /// Adds slices into a zero tensor whose `axis` has extent `out_extent`:
    /// `out[.., indices[i], ..] += x[.., i, ..]`. Colliding indices sum.
    /// The adjoint of `gather` with the same index list.
    pub fn scatter_add(&self, axis: usize, indices: &[usize], out_extent: usize) -> Result<Tensor<E>> {
        Tensor::check_finite("scatter_add", &[self])?;
        if axis >= self.rank() {
            return Err(Error::shape("scatter_add", format!("axis {} out of range", axis)));
        }
        if indices.len() != self.shape()[axis] {
            return Err(Error::contract(
                "scatter_add",
                format!("{} indices for extent {}", indices.len(), self.shape()[axis]),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= out_extent) {
            return Err(Error::contract(
                "scatter_add",
                format!("index {} out of range for extent {}", bad, out_extent),
            ));
        }
        let (pre, n, post) = split_at_axis(self.shape(), axis);
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = out_extent;
        let mut data = vec![E::zero(); pre * out_extent * post];
        for o in 0..pre {
            for (i, &dst_i) in indices.iter().enumerate() {
                let src = (o * n + i) * post;
                let dst = (o * out_extent + dst_i) * post;
                for p in 0..post {
                    data[dst + p] = data[dst + p] + self.data()[src + p];
                }
            }
        }
        let idx = indices.to_vec();
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            vec![needs[0].then(|| {
                let mut dx = vec![E::zero(); pre * idx.len() * post];
                for o in 0..pre {
                    for (i, &dst_i) in idx.iter().enumerate() {
                        let src = (o * out_extent + dst_i) * post;
                        let dst = (o * idx.len() + i) * post;
                        dx[dst..dst + post].copy_from_slice(&g[src..src + post]);
                    }
                }
                dx
            })]
        });
        Ok(Tensor::from_op(out_shape, data, vec![self.clone()], backward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::autodiff::backward;
    use crate::tensor::test_util::assert_close;

    #[test]
    fn reshape_shares_data_and_routes_grad() {
        let x = Tensor::<f64>::from_vec((0..6).map(f64::from).collect(), &[2, 3]).unwrap().var();
        let y = x.reshape(&[3, 2]).unwrap();
        assert_eq!(y.data().as_ptr(), x.data().as_ptr());
        let g = backward(&y.mul(&y).unwrap().sum_all().unwrap()).unwrap();
        assert_close(g.get(&x).unwrap(), &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0], 0.0);
    }

    #[test]
    fn permute_round_trip_is_identity() {
        let x = Tensor::<f64>::from_vec((0..24).map(f64::from).collect(), &[2, 3, 4]).unwrap();
        let p = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.data(), x.data());
        // Spot-check one element: p[w,b,h] == x[b,h,w]
        // p[3,1,2] -> flat 3*6+1*3+2 = 23; x[1,2,3] -> flat 23. Both are 23.0.
        assert_eq!(p.data()[23], 23.0);
    }

    #[test]
    fn concat_slice_inverse() {
        let a = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap().var();
        let b = Tensor::<f64>::from_vec(vec![5.0, 6.0], &[2, 1]).unwrap().var();
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_close(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0], 0.0);
        let s = c.slice(1, 2, 1).unwrap();
        assert_close(s.data(), &[5.0, 6.0], 0.0);
        let g = backward(&s.sum_all().unwrap()).unwrap();
        assert_close(g.get(&a).unwrap(), &[0.0; 4], 0.0);
        assert_close(g.get(&b).unwrap(), &[1.0, 1.0], 0.0);
    }

    #[test]
    fn gather_scatter_are_adjoint() {
        let x = Tensor::<f64>::from_vec((0..10).map(f64::from).collect(), &[2, 5]).unwrap().var();
        let gth = x.gather(1, &[4, 0, 4]).unwrap();
        assert_close(gth.data(), &[4.0, 0.0, 4.0, 9.0, 5.0, 9.0], 0.0);
        let g = backward(&gth.sum_all().unwrap()).unwrap();
        // Index 4 appears twice: its gradient doubles.
        assert_close(g.get(&x).unwrap(), &[1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 2.0], 0.0);

        let y = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let sc = y.scatter_add(0, &[2, 0, 2], 4).unwrap();
        assert_close(sc.data(), &[2.0, 0.0, 4.0, 0.0], 0.0);
    }

    #[test]
    fn scatter_grad_gathers() {
        let y = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap().var();
        let sc = y.scatter_add(0, &[2, 0, 2], 4).unwrap();
        let w = Tensor::<f64>::from_vec(vec![10.0, 20.0, 30.0, 40.0], &[4]).unwrap();
        let g = backward(&sc.mul(&w).unwrap().sum_all().unwrap()).unwrap();
        assert_close(g.get(&y).unwrap(), &[30.0, 10.0, 30.0], 0.0);
    }
}

//! Batched matrix multiplication.
//!
//! `a (..., M, K) @ b (..., K, N)`: leading batch dims must match exactly, or
//! either operand may be rank-2 and is then broadcast across the other's
//! batch. Rows of each output matrix are computed independently (and in
//! parallel), each row sequentially, so results do not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::shape::fmt_shape;
use crate::tensor::{BackwardFn, Elem, Tensor};

/// C (m,n) = op(A)·op(B) where `ta`/`tb` transpose the stored layout:
/// with `ta`, `a` is stored (k,m); with `tb`, `b` is stored (n,k).
fn gemm<E: Elem>(a: &[E], b: &[E], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<E> {
    let mut c = vec![E::zero(); m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            if tb {
                for (j, cj) in row.iter_mut().enumerate() {
                    *cj = *cj + av * b[j * k + p];
                }
            } else {
                let brow = &b[p * n..(p + 1) * n];
                for (cj, &bv) in row.iter_mut().zip(brow) {
                    *cj = *cj + av * bv;
                }
            }
        }
    }
    c
}

impl<E: Elem> Tensor<E> {
    pub fn matmul(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        Tensor::check_finite("matmul", &[self, rhs])?;
        let (ashape, bshape) = (self.shape(), rhs.shape());
        if ashape.len() < 2 || bshape.len() < 2 {
            return Err(Error::shape(
                "matmul",
                format!("operands must be rank >= 2, got {} and {}", fmt_shape(ashape), fmt_shape(bshape)),
            ));
        }
        let (m, ka) = (ashape[ashape.len() - 2], ashape[ashape.len() - 1]);
        let (kb, n) = (bshape[bshape.len() - 2], bshape[bshape.len() - 1]);
        if ka != kb {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: {} vs {}", fmt_shape(ashape), fmt_shape(bshape)),
            ));
        }
        let ab = &ashape[..ashape.len() - 2];
        let bb = &bshape[..bshape.len() - 2];
        let batch_shape: Vec<usize> = if ab == bb {
            ab.to_vec()
        } else if bb.is_empty() {
            ab.to_vec()
        } else if ab.is_empty() {
            bb.to_vec()
        } else {
            return Err(Error::shape(
                "matmul",
                format!("batch dims differ: {} vs {}", fmt_shape(ashape), fmt_shape(bshape)),
            ));
        };
        let batches: usize = batch_shape.iter().product();
        let a_batched = !ab.is_empty();
        let b_batched = !bb.is_empty();
        let k = ka;

        let ad = self.data();
        let bd = rhs.data();
        let mut out = vec![E::zero(); batches * m * n];
        out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            let (bi, i) = (r / m, r % m);
            let ao = if a_batched { bi * m * k } else { 0 };
            let bo = if b_batched { bi * k * n } else { 0 };
            let arow = &ad[ao + i * k..ao + (i + 1) * k];
            for (p, &av) in arow.iter().enumerate() {
                let brow = &bd[bo + p * n..bo + (p + 1) * n];
                for (cj, &bv) in row.iter_mut().zip(brow) {
                    *cj = *cj + av * bv;
                }
            }
        });

        let mut out_shape = batch_shape;
        out_shape.push(m);
        out_shape.push(n);

        let a_data = std::sync::Arc::new(ad.to_vec());
        let b_data = std::sync::Arc::new(bd.to_vec());
        let backward: BackwardFn<E> = Box::new(move |g, needs| {
            let da = needs[0].then(|| {
                let len = if a_batched { batches * m * k } else { m * k };
                let mut da = vec![E::zero(); len];
                for bi in 0..batches {
                    let go = bi * m * n;
                    let bo = if b_batched { bi * k * n } else { 0 };
                    let ao = if a_batched { bi * m * k } else { 0 };
                    // dA = G · B^T
                    let block = gemm(&g[go..go + m * n], &b_data[bo..bo + k * n], m, n, k, false, true);
                    for (d, s) in da[ao..ao + m * k].iter_mut().zip(&block) {
                        *d = *d + *s;
                    }
                }
                da
            });
            let db = needs[1].then(|| {
                let len = if b_batched { batches * k * n } else { k * n };
                let mut db = vec![E::zero(); len];
                for bi in 0..batches {
                    let go = bi * m * n;
                    let ao = if a_batched { bi * m * k } else { 0 };
                    let bo = if b_batched { bi * k * n } else { 0 };
                    // dB = A^T · G
                    let block = gemm(&a_data[ao..ao + m * k], &g[go..go + m * n], k, m, n, true, false);
                    for (d, s) in db[bo..bo + k * n].iter_mut().zip(&block) {
                        *d = *d + *s;
                    }
                }
                db
            });
            vec![da, db]
        });

        Ok(Tensor::from_op(out_shape, out, vec![self.clone(), rhs.clone()], backward))
    }
}

//! Shape arithmetic shared by the op kernels: strides, broadcasting, and
//! flat-index walking. Shapes are plain `Vec<usize>`; rank 0 is a scalar.

use crate::error::{Error, Result};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides. A zero-extent axis still gets a well-defined stride.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn fmt_shape(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("({})", dims.join(","))
}

/// Broadcast two shapes by the trailing-alignment rule: axes are matched from
/// the right, and each pair must be equal or contain a 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::shape(
                op,
                format!("cannot broadcast {} with {}", fmt_shape(a), fmt_shape(b)),
            ));
        };
    }
    Ok(out)
}

/// Strides for reading a tensor of shape `from` as if it had the broadcast
/// shape `to`: broadcast axes read with stride 0.
pub fn broadcast_strides(from: &[usize], to: &[usize]) -> Vec<usize> {
    let fs = strides(from);
    let offset = to.len() - from.len();
    let mut out = vec![0usize; to.len()];
    for i in 0..to.len() {
        if i >= offset {
            let d = from[i - offset];
            out[i] = if d == 1 && to[i] != 1 { 0 } else { fs[i - offset] };
        }
    }
    out
}

/// Walks the multi-index of `shape` in row-major order, yielding for each
/// logical element the flat offsets into two operand buffers described by
/// (possibly zero) strides. Used by broadcasting binary kernels.
pub struct BroadcastIter {
    shape: Vec<usize>,
    sa: Vec<usize>,
    sb: Vec<usize>,
    idx: Vec<usize>,
    oa: usize,
    ob: usize,
    remaining: usize,
}

impl BroadcastIter {
    pub fn new(shape: &[usize], sa: Vec<usize>, sb: Vec<usize>) -> Self {
        let remaining = numel(shape);
        BroadcastIter {
            shape: shape.to_vec(),
            sa,
            sb,
            idx: vec![0; shape.len()],
            oa: 0,
            ob: 0,
            remaining,
        }
    }
}

impl Iterator for BroadcastIter {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        if self.remaining == 0 {
            return None;
        }
        let item = (self.oa, self.ob);
        self.remaining -= 1;
        // Advance the multi-index from the last axis, carrying.
        for ax in (0..self.shape.len()).rev() {
            self.idx[ax] += 1;
            self.oa += self.sa[ax];
            self.ob += self.sb[ax];
            if self.idx[ax] < self.shape[ax] {
                break;
            }
            self.oa -= self.sa[ax] * self.shape[ax];
            self.ob -= self.sb[ax] * self.shape[ax];
            self.idx[ax] = 0;
        }
        Some(item)
    }
}

/// Splits `shape` at `axis` into (product of axes before, extent, product of
/// axes after). Many reductions and normalizations walk this decomposition.
pub fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let pre: usize = shape[..axis].iter().product();
    let post: usize = shape[axis + 1..].iter().product();
    (pre, shape[axis], post)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_row_major() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides(&[5]), vec![1]);
        assert_eq!(strides(&[]), Vec::<usize>::new());
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape("t", &[2, 1, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape("t", &[1], &[7]).unwrap(), vec![7]);
        assert!(broadcast_shape("t", &[2, 3], &[4, 3]).is_err());
    }

    #[test]
    fn broadcast_iter_matches_naive() {
        let a = [2usize, 1, 3];
        let out = [2usize, 4, 3];
        let sa = broadcast_strides(&a, &out);
        let sb = broadcast_strides(&out, &out);
        let pairs: Vec<(usize, usize)> = BroadcastIter::new(&out, sa.clone(), sb).collect();
        assert_eq!(pairs.len(), 24);
        // Manual check of a few positions: index (i,j,k) reads a at i*3+k.
        let at = |i: usize, j: usize, k: usize| pairs[(i * 4 + j) * 3 + k];
        assert_eq!(at(0, 0, 0), (0, 0));
        assert_eq!(at(0, 3, 2), (2, 11));
        assert_eq!(at(1, 2, 1), (4, 19));
    }
}

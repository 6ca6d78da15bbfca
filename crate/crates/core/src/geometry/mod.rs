//! Layout transforms between the 5D light-field tensor and its EPI / MacPI
//! views, plus the diagonal gather/scatter.
//!
//! Conventions, fixed repo-wide:
//!   - light field tensor shape (B, C, A, H, W) with A = U·V
//!   - angular flattening a = u·V + v
//!   - horizontal EPI: b c (u v) h w -> b c (v w) u h
//!   - vertical EPI:   b c (u v) h w -> b c (u h) v w
//!   - MacPI:          (B, C, U·H, V·W), element (h·U+u, w·V+v)
//!   - diagonals: 45° gathers views (i,i), 135° gathers (i, U-1-i); both are
//!     laid out (B, C, W, U, H) with sequence axis W and token grid (U, H)

pub mod dihedral;

pub use dihedral::Dihedral;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// A 4D light field stored as (B, C, A, H, W), A = U·V.
#[derive(Clone)]
pub struct LightField<E: Elem> {
    tensor: Tensor<E>,
    u: usize,
    v: usize,
}

impl<E: Elem> LightField<E> {
    pub fn new(tensor: Tensor<E>, u: usize, v: usize) -> Result<Self> {
        if tensor.rank() != 5 {
            return Err(Error::shape(
                "light_field",
                format!("want rank 5, got rank {}", tensor.rank()),
            ));
        }
        if u == 0 || v == 0 || tensor.shape()[2] != u * v {
            return Err(Error::shape(
                "light_field",
                format!("angular extent {} != {}x{}", tensor.shape()[2], u, v),
            ));
        }
        Ok(LightField { tensor, u, v })
    }

    pub fn tensor(&self) -> &Tensor<E> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<E> {
        self.tensor
    }

    /// Same angular grid, new payload (shape revalidated).
    pub fn with_tensor(&self, tensor: Tensor<E>) -> Result<Self> {
        LightField::new(tensor, self.u, self.v)
    }

    pub fn batch(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn views(&self) -> usize {
        self.u * self.v
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[3]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[4]
    }

    /// The tensor reshaped to the explicit 6D (B, C, U, V, H, W) view.
    pub fn six_d(&self) -> Result<Tensor<E>> {
        self.tensor.reshape(&[
            self.batch(),
            self.channels(),
            self.u,
            self.v,
            self.height(),
            self.width(),
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
    Diag45,
    Diag135,
    MacPi,
}

/// A rearranged view of a light field, remembering enough to invert.
pub struct EpiView<E: Elem> {
    tensor: Tensor<E>,
    direction: Direction,
    dims: ViewDims,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ViewDims {
    b: usize,
    c: usize,
    u: usize,
    v: usize,
    h: usize,
    w: usize,
}

impl ViewDims {
    fn of<E: Elem>(lf: &LightField<E>) -> Self {
        ViewDims {
            b: lf.batch(),
            c: lf.channels(),
            u: lf.u(),
            v: lf.v(),
            h: lf.height(),
            w: lf.width(),
        }
    }
}

impl<E: Elem> EpiView<E> {
    pub fn tensor(&self) -> &Tensor<E> {
        &self.tensor
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Replaces the payload with an equally-shaped processed tensor.
    pub fn with_tensor(&self, tensor: Tensor<E>) -> Result<Self> {
        if tensor.shape() != self.tensor.shape() {
            return Err(Error::shape(
                "epi_view",
                format!(
                    "processed tensor {:?} does not match view shape {:?}",
                    tensor.shape(),
                    self.tensor.shape()
                ),
            ));
        }
        Ok(EpiView { tensor, direction: self.direction, dims: self.dims })
    }
}

/// b c (u v) h w -> b c (v w) u h: one sequence per (v, w), tokens on (u, h).
pub fn to_horizontal_epi<E: Elem>(lf: &LightField<E>) -> Result<EpiView<E>> {
    let d = ViewDims::of(lf);
    let t = lf
        .six_d()?
        .permute(&[0, 1, 3, 5, 2, 4])?
        .reshape(&[d.b, d.c, d.v * d.w, d.u, d.h])?;
    Ok(EpiView { tensor: t, direction: Direction::Horizontal, dims: d })
}

/// b c (u v) h w -> b c (u h) v w: one sequence per (u, h), tokens on (v, w).
pub fn to_vertical_epi<E: Elem>(lf: &LightField<E>) -> Result<EpiView<E>> {
    let d = ViewDims::of(lf);
    let t = lf
        .six_d()?
        .permute(&[0, 1, 2, 4, 3, 5])?
        .reshape(&[d.b, d.c, d.u * d.h, d.v, d.w])?;
    Ok(EpiView { tensor: t, direction: Direction::Vertical, dims: d })
}

/// Macro-pixel image (B, C, U·H, V·W): row h·U+u, column w·V+v.
pub fn to_macpi<E: Elem>(lf: &LightField<E>) -> Result<EpiView<E>> {
    let d = ViewDims::of(lf);
    let t = lf
        .six_d()?
        .permute(&[0, 1, 4, 2, 5, 3])?
        .reshape(&[d.b, d.c, d.h * d.u, d.w * d.v])?;
    Ok(EpiView { tensor: t, direction: Direction::MacPi, dims: d })
}

/// Inverts a horizontal/vertical/MacPI view back to the light field.
/// Diagonal views are not permutations; use `scatter_diagonals` instead.
pub fn from_epi<E: Elem>(view: &EpiView<E>) -> Result<LightField<E>> {
    let d = view.dims;
    let tensor = match view.direction {
        Direction::Horizontal => view
            .tensor
            .reshape(&[d.b, d.c, d.v, d.w, d.u, d.h])?
            .permute(&[0, 1, 4, 2, 5, 3])?,
        Direction::Vertical => view
            .tensor
            .reshape(&[d.b, d.c, d.u, d.h, d.v, d.w])?
            .permute(&[0, 1, 2, 4, 3, 5])?,
        Direction::MacPi => view
            .tensor
            .reshape(&[d.b, d.c, d.h, d.u, d.w, d.v])?
            .permute(&[0, 1, 3, 5, 2, 4])?,
        Direction::Diag45 | Direction::Diag135 => {
            return Err(Error::contract(
                "from_epi",
                "diagonal views are partial; use scatter_diagonals",
            ));
        }
    };
    LightField::new(
        tensor.reshape(&[d.b, d.c, d.u * d.v, d.h, d.w])?,
        d.u,
        d.v,
    )
}

/// Inverse macro-pixel interleave for a standalone `(B, C, U·H, V·W)`
/// tensor with any channel count, e.g. features produced by a convolution
/// over the macro-pixel image of a single-channel field.
pub fn macpi_to_lf<E: Elem>(t: &Tensor<E>, u: usize, v: usize) -> Result<LightField<E>> {
    let sh = t.shape();
    if sh.len() != 4 {
        return Err(Error::shape(
            "macpi_to_lf",
            format!("expected (B, C, U*H, V*W), got rank {}", sh.len()),
        ));
    }
    if u == 0 || v == 0 || sh[2] % u != 0 || sh[3] % v != 0 {
        return Err(Error::shape(
            "macpi_to_lf",
            format!("rows {} / cols {} not divisible by {u} x {v}", sh[2], sh[3]),
        ));
    }
    let (b, c, h, w) = (sh[0], sh[1], sh[2] / u, sh[3] / v);
    let lf = t
        .reshape(&[b, c, h, u, w, v])?
        .permute(&[0, 1, 3, 5, 2, 4])?
        .reshape(&[b, c, u * v, h, w])?;
    LightField::new(lf, u, v)
}

/// Flat angular indices of the 45° diagonal (i, i).
pub fn diag45_indices(u: usize, v: usize) -> Vec<usize> {
    (0..u).map(|i| i * v + i).collect()
}

/// Flat angular indices of the 135° diagonal (i, U-1-i).
pub fn diag135_indices(u: usize, v: usize) -> Vec<usize> {
    (0..u).map(|i| i * v + (u - 1 - i)).collect()
}

/// Gathers the two diagonal view sequences, each laid out (B, C, W, U, H).
pub fn extract_diagonals<E: Elem>(lf: &LightField<E>) -> Result<(EpiView<E>, EpiView<E>)> {
    if lf.u() != lf.v() {
        return Err(Error::contract(
            "extract_diagonals",
            format!("angular grid {}x{} is not square", lf.u(), lf.v()),
        ));
    }
    let d = ViewDims::of(lf);
    let mut out = Vec::with_capacity(2);
    for (dir, idx) in [
        (Direction::Diag45, diag45_indices(d.u, d.v)),
        (Direction::Diag135, diag135_indices(d.u, d.v)),
    ] {
        // (B,C,A,H,W) -gather-> (B,C,U,H,W) -> (B,C,W,U,H)
        let t = lf.tensor().gather(2, &idx)?.permute(&[0, 1, 4, 2, 3])?;
        out.push(EpiView { tensor: t, direction: dir, dims: d });
    }
    let d135 = out.pop().expect("two views");
    let d45 = out.pop().expect("two views");
    Ok((d45, d135))
}

/// Writes processed diagonal responses back into a zero light field.
/// Contributions add; with odd U the center view {(U-1)/2, (U-1)/2} lies on
/// both diagonals and receives the sum of both. Off-diagonal views stay
/// exactly zero.
pub fn scatter_diagonals<E: Elem>(
    proc45: &EpiView<E>,
    proc135: &EpiView<E>,
    like: &LightField<E>,
) -> Result<LightField<E>> {
    if like.u() != like.v() {
        return Err(Error::contract("scatter_diagonals", "angular grid is not square"));
    }
    let d = ViewDims::of(like);
    let want = [d.b, d.c, d.w, d.u, d.h];
    let mut parts: Vec<Tensor<E>> = Vec::with_capacity(2);
    for (view, dir, idx) in [
        (proc45, Direction::Diag45, diag45_indices(d.u, d.v)),
        (proc135, Direction::Diag135, diag135_indices(d.u, d.v)),
    ] {
        if view.direction != dir {
            return Err(Error::contract(
                "scatter_diagonals",
                format!("expected a {:?} view, got {:?}", dir, view.direction),
            ));
        }
        if view.tensor.shape() != want {
            return Err(Error::shape(
                "scatter_diagonals",
                format!("view shape {:?}, want {:?}", view.tensor.shape(), want),
            ));
        }
        // (B,C,W,U,H) -> (B,C,U,H,W) -> scatter over the angular axis.
        let t = view
            .tensor
            .permute(&[0, 1, 3, 4, 2])?
            .scatter_add(2, &idx, d.u * d.v)?;
        parts.push(t);
    }
    like.with_tensor(parts[0].add(&parts[1])?)
}

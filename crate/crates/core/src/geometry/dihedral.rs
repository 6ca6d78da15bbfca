//! The dihedral group D4 acting jointly on spatial and angular axes.
//!
//! Every element is an (optional transpose, then optional axis reversals)
//! applied identically to the spatial grid (h, w) and the angular grid
//! (u, v). Acting jointly keeps epipolar slopes valid: a spatial transform
//! of the views paired with the same transform of the view grid maps a light
//! field of disparity d to another light field of disparity d.

use crate::error::Result;
use crate::geometry::LightField;
use crate::tensor::{Elem, Tensor};

/// One joint spatial-angular symmetry: transpose first, then reversals of
/// the (u, h) axes and/or the (v, w) axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dihedral {
    pub transpose: bool,
    pub flip_uh: bool,
    pub flip_vw: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { transpose: false, flip_uh: false, flip_vw: false };

    /// All 8 elements, in a fixed enumeration order.
    pub fn all() -> [Dihedral; 8] {
        let mut out = [Dihedral::IDENTITY; 8];
        for (i, e) in out.iter_mut().enumerate() {
            *e = Dihedral {
                transpose: i & 4 != 0,
                flip_uh: i & 2 != 0,
                flip_vw: i & 1 != 0,
            };
        }
        out
    }

    /// The 4 elements that do not transpose (usable when U != V).
    pub fn non_transposing() -> [Dihedral; 4] {
        let mut out = [Dihedral::IDENTITY; 4];
        for (i, e) in out.iter_mut().enumerate() {
            *e = Dihedral { transpose: false, flip_uh: i & 2 != 0, flip_vw: i & 1 != 0 };
        }
        out
    }

    pub fn inverse(self) -> Dihedral {
        if self.transpose {
            // Flips applied after a transpose swap roles when undone.
            Dihedral { transpose: true, flip_uh: self.flip_vw, flip_vw: self.flip_uh }
        } else {
            self
        }
    }

    /// Group composition: the element equal to applying `self`, then `next`.
    ///
    /// Derived from T·F(a,b) = F(b,a)·T with each element normalized as
    /// flips-after-transpose.
    pub fn then(self, next: Dihedral) -> Dihedral {
        let (a, b) = if next.transpose {
            (self.flip_vw, self.flip_uh)
        } else {
            (self.flip_uh, self.flip_vw)
        };
        Dihedral {
            transpose: self.transpose ^ next.transpose,
            flip_uh: a ^ next.flip_uh,
            flip_vw: b ^ next.flip_vw,
        }
    }

    /// Applies the symmetry to a light field.
    pub fn apply<E: Elem>(self, lf: &LightField<E>) -> Result<LightField<E>> {
        let (mut u, mut v) = (lf.u(), lf.v());
        let mut t = lf.six_d()?;
        if self.transpose {
            t = t.permute(&[0, 1, 3, 2, 5, 4])?;
            std::mem::swap(&mut u, &mut v);
        }
        if self.flip_uh {
            t = reverse_axis(&t, 2)?;
            t = reverse_axis(&t, 4)?;
        }
        if self.flip_vw {
            t = reverse_axis(&t, 3)?;
            t = reverse_axis(&t, 5)?;
        }
        let s = t.shape().to_vec();
        LightField::new(t.reshape(&[s[0], s[1], s[2] * s[3], s[4], s[5]])?, u, v)
    }
}

fn reverse_axis<E: Elem>(t: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
    let n = t.shape()[axis];
    let idx: Vec<usize> = (0..n).rev().collect();
    t.gather(axis, &idx)
}

//! Joint spatial-angular augmentation of paired low/high-resolution fields.
//!
//! Flips and transposes must hit the view grid and the view contents
//! together, otherwise epipolar slopes change sign in one domain but not the
//! other and the pair stops describing a consistent scene.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Dihedral, LightField};
use crate::tensor::Elem;

/// Applies one symmetry element to both halves of a training pair.
pub fn apply_to_pair<E: Elem>(
    g: Dihedral,
    lr: &LightField<E>,
    hr: &LightField<E>,
) -> Result<(LightField<E>, LightField<E>)> {
    if lr.u() != hr.u() || lr.v() != hr.v() {
        return Err(Error::contract(
            "apply_to_pair",
            format!(
                "angular layouts differ: {}x{} vs {}x{}",
                lr.u(),
                lr.v(),
                hr.u(),
                hr.v()
            ),
        ));
    }
    if g.transpose && lr.u() != lr.v() {
        return Err(Error::contract(
            "apply_to_pair",
            format!("transpose element needs a square view grid, got {}x{}", lr.u(), lr.v()),
        ));
    }
    Ok((g.apply(lr)?, g.apply(hr)?))
}

/// Draws a uniform symmetry element and applies it jointly. Non-square view
/// grids restrict the draw to the four transpose-free elements.
pub fn augment_lf<E: Elem>(
    lr: &LightField<E>,
    hr: &LightField<E>,
    rng: &mut ChaCha8Rng,
) -> Result<(LightField<E>, LightField<E>)> {
    let g = if lr.u() == lr.v() {
        Dihedral::all()[rng.random_range(0..8)]
    } else {
        Dihedral::non_transposing()[rng.random_range(0..4)]
    };
    apply_to_pair(g, lr, hr)
}

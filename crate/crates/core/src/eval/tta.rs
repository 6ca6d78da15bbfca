//! Self-ensemble inference: average the model over the joint
//! spatial-angular symmetry group.
//!
//! Each element g contributes g_inverse(model(g(x))); a model equivariant
//! under g contributes its plain output, so averaging never changes an
//! ideal model and smooths a real one. Elements run in their fixed
//! enumeration order for determinism.

use crate::error::{Error, Result};
use crate::geometry::{Dihedral, LightField};
use crate::tensor::autodiff::no_grad;
use crate::tensor::Elem;

/// Runs test-time augmentation. Returns the averaged field and the number
/// of group elements used: 8 on square view grids, 4 (no transposes) when
/// U differs from V.
pub fn tta_infer<E: Elem>(
    model: &dyn Fn(&LightField<E>) -> Result<LightField<E>>,
    lr: &LightField<E>,
) -> Result<(LightField<E>, usize)> {
    let elements: Vec<Dihedral> = if lr.u() == lr.v() {
        Dihedral::all().to_vec()
    } else {
        Dihedral::non_transposing().to_vec()
    };
    let mut acc: Option<crate::tensor::Tensor<E>> = None;
    for g in &elements {
        let sr = no_grad(|| model(&g.apply(lr)?))?;
        let back = g.inverse().apply(&sr)?;
        if back.u() != lr.u() || back.v() != lr.v() {
            return Err(Error::contract(
                "tta_infer",
                "model changed the view grid of a transformed field",
            ));
        }
        acc = Some(match acc {
            None => back.into_tensor(),
            Some(t) => {
                if back.tensor().shape() != t.shape() {
                    return Err(Error::contract(
                        "tta_infer",
                        "model output shape varies across group elements",
                    ));
                }
                t.add(back.tensor())?
            }
        });
    }
    let n = elements.len();
    let mean = acc.expect("group is never empty").scale(1.0 / n as f64)?;
    Ok((LightField::new(mean, lr.u(), lr.v())?, n))
}

//! Reconstruction losses: plain L1 and a Charbonnier loss restricted to the
//! hardest fraction of pixels in the batch.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

fn same_shape<E: Elem>(op: &'static str, pred: &Tensor<E>, target: &Tensor<E>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            op,
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn l1_loss<E: Elem>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("l1_loss", pred, target)?;
    pred.sub(target)?.abs_elem()?.mean_all()
}

/// Charbonnier loss over the hardest `k` fraction of pixels.
///
/// Every element of the batch gets the per-pixel penalty sqrt(d^2 + eps^2);
/// the loss is the mean of the ceil(k * P) largest penalties, ranked over the
/// whole batch at once. The selection happens outside the graph, so gradients
/// flow only through the surviving pixels; ties at the cutoff keep the pixel
/// with the smaller flat index.
pub fn charbonnier_ohem<E: Elem>(
    pred: &Tensor<E>,
    target: &Tensor<E>,
    k: f64,
    eps: f64,
) -> Result<Tensor<E>> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::ConfigValue {
            key: "ohem_k".to_string(),
            msg: format!("hard-pixel fraction must be in (0, 1], got {k}"),
        });
    }
    same_shape("charbonnier_ohem", pred, target)?;
    let per_pixel = pred
        .sub(target)?
        .square()?
        .add_scalar(eps * eps)?
        .sqrt_elem()?;
    let total = per_pixel.numel();
    let keep = ((k * total as f64).ceil() as usize).clamp(1, total);
    if keep == total {
        return per_pixel.mean_all();
    }
    // Descending stable sort: equal penalties stay in flat-index order.
    let values = per_pixel.data();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| values[b].as_f64().total_cmp(&values[a].as_f64()));
    let mut mask = vec![E::zero(); total];
    for &i in order.iter().take(keep) {
        mask[i] = E::one();
    }
    let mask = Tensor::from_vec(mask, per_pixel.shape())?;
    per_pixel.mul(&mask)?.sum_all()?.scale(1.0 / keep as f64)
}

//! Central-difference verification of reverse-mode gradients.
//!
//! The function under test rebuilds its graph from a flat list of leaf
//! tensors so the checker can re-evaluate it at perturbed points. Everything
//! runs in f64; the checked configuration also screens every intermediate
//! for non-finite values.

use crate::error::Result;
use crate::tensor::autodiff::{backward, no_grad};
use crate::tensor::Tensor;

pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Upper bound on elements probed per parameter tensor; evenly spaced
    /// (deterministic) subsampling above it.
    pub max_per_param: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, max_per_param: usize::MAX }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over probed elements of |analytic - numeric| / max(|analytic|, |numeric|, 1).
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// (parameter index, flat element) of the worst element.
    pub worst: (usize, usize),
    pub probed: usize,
}

/// Verifies `d loss / d params` against central differences.
///
/// `f` must be a pure function of the given leaves (any internal constants
/// are fine; hidden mutable state is not).
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let vars: Vec<Tensor<f64>> = params
        .iter()
        .map(|p| Tensor::from_vec(p.data().to_vec(), p.shape()).map(Tensor::var))
        .collect::<Result<_>>()?;
    let loss = f(&vars)?;
    let grads = backward(&loss)?;

    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        no_grad(|| f(tensors)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: (0, 0),
        probed: 0,
    };

    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(var);
        let n = var.numel();
        let step = if n > cfg.max_per_param {
            (n + cfg.max_per_param - 1) / cfg.max_per_param
        } else {
            1
        };
        for j in (0..n).step_by(step) {
            let probe = |delta: f64| -> Result<f64> {
                let mut data = var.data().to_vec();
                data[j] += delta;
                let mut set: Vec<Tensor<f64>> = vars.to_vec();
                set[pi] = Tensor::from_vec(data, var.shape())?;
                eval(&set)
            };
            let lp = probe(cfg.eps)?;
            let lm = probe(-cfg.eps)?;
            let numeric = (lp - lm) / (2.0 * cfg.eps);
            let a = analytic[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1.0);
            report.probed += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (pi, j);
            }
            report.max_abs_err = report.max_abs_err.max(abs);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_expression_passes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        let a = Tensor::<f64>::rand_uniform(&[3, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::rand_uniform(&[4, 2], -1.0, 1.0, &mut rng);
        let report = grad_check(
            |p| {
                p[0].matmul(&p[1])?
                    .gelu()?
                    .square()?
                    .mean_all()
            },
            &[a, b],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-7, "rel err {}", report.max_rel_err);
        assert_eq!(report.probed, 20);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // abs has a kink at zero; probing across it breaks the FD estimate.
        let x = Tensor::<f64>::from_vec(vec![1e-7], &[1]).unwrap();
        let report = grad_check(
            |p| p[0].abs_elem()?.sum_all(),
            &[x],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err > 1e-2);
    }

    #[test]
    fn subsampling_caps_probes() {
        let x = Tensor::<f64>::ones(&[100]);
        let cfg = GradCheckConfig { eps: 1e-5, max_per_param: 10 };
        let report = grad_check(|p| p[0].square()?.sum_all(), &[x], &cfg).unwrap();
        assert!(report.probed <= 10);
        assert!(report.max_rel_err < 1e-9);
    }
}

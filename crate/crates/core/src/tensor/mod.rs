//! Dense row-major tensors generic over the element type, with reverse-mode
//! automatic differentiation.
//!
//! The element type parameter doubles as the precision switch: `Tensor<f32>`
//! is the training/inference configuration, `Tensor<f64>` the checked oracle
//! configuration used by gradient verification. Because every op is
//! monomorphic in `E`, a graph can never mix precisions.

pub mod autodiff;
pub mod elem;
pub mod format;
pub mod gradcheck;
pub mod ops;
pub mod shape;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
pub use elem::{DType, Elem};
pub use ops::norm::SoftmaxMask;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Gradient closure of an op: receives the output gradient and a per-parent
/// "is a gradient needed" flag, returns one gradient buffer per parent
/// (`None` where not needed or not defined).
pub(crate) type BackwardFn<E> = Box<dyn Fn(&[E], &[bool]) -> Vec<Option<Vec<E>>> + Send + Sync>;

pub(crate) struct Node<E: Elem> {
    pub parents: Vec<Tensor<E>>,
    pub backward: BackwardFn<E>,
}

/// Immutable dense tensor. Cloning is cheap (shared buffers) and preserves
/// identity: clones refer to the same value in the autodiff graph.
pub struct Tensor<E: Elem> {
    id: u64,
    var: bool,
    shape: Arc<Vec<usize>>,
    data: Arc<Vec<E>>,
    node: Option<Arc<Node<E>>>,
}

impl<E: Elem> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            id: self.id,
            var: self.var,
            shape: Arc::clone(&self.shape),
            data: Arc::clone(&self.data),
            node: self.node.clone(),
        }
    }
}

impl<E: Elem> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor{} id={} var={} grad={}",
            shape::fmt_shape(&self.shape),
            self.id,
            self.var,
            self.node.is_some()
        )
    }
}

impl<E: Elem> Tensor<E> {
    pub fn from_vec(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        if data.len() != shape::numel(shape) {
            return Err(Error::shape(
                "from_vec",
                format!("{} elements for shape {}", data.len(), shape::fmt_shape(shape)),
            ));
        }
        Ok(Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(shape.to_vec()),
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn full(value: E, shape: &[usize]) -> Self {
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(shape.to_vec()),
            data: Arc::new(vec![value; shape::numel(shape)]),
            node: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(E::zero(), shape)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(E::one(), shape)
    }

    pub fn scalar(value: E) -> Self {
        Self::full(value, &[])
    }

    /// i.i.d. uniform samples on `[lo, hi)`.
    pub fn rand_uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape::numel(shape);
        let data: Vec<E> = (0..n)
            .map(|_| E::from_f64(rng.random_range(lo..hi)))
            .collect();
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(shape.to_vec()),
            data: Arc::new(data),
            node: None,
        }
    }

    /// Fan-in-scaled uniform init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn rand_fan_in<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self::rand_uniform(shape, -bound, bound, rng)
    }

    /// Marks this tensor as a trainable leaf so `backward` reports its
    /// gradient. Intended for parameters; identity is preserved.
    pub fn var(mut self) -> Self {
        self.var = true;
        self
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        E::DTYPE
    }

    pub fn is_var(&self) -> bool {
        self.var
    }

    pub fn requires_grad(&self) -> bool {
        self.var || self.node.is_some()
    }

    /// The single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(Error::contract(
                "item",
                format!("tensor has {} elements", self.numel()),
            ));
        }
        Ok(self.data[0])
    }

    /// Element-type conversion. Data only: the result is a fresh leaf with no
    /// graph history, so precision can never change mid-graph.
    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        let data: Vec<F> = self.data.iter().map(|&v| F::from_f64(v.as_f64())).collect();
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(self.shape.to_vec()),
            data: Arc::new(data),
            node: None,
        }
    }

    /// Fresh leaf with the same shape and data but no graph history.
    pub fn detach(&self) -> Tensor<E> {
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::clone(&self.shape),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    /// Replaces the data of a leaf in place (optimizer updates). Fails on
    /// graph outputs: history would silently become stale.
    pub fn set_data(&mut self, data: Vec<E>) -> Result<()> {
        if self.node.is_some() {
            return Err(Error::contract("set_data", "cannot overwrite an op output"));
        }
        if data.len() != self.numel() {
            return Err(Error::shape(
                "set_data",
                format!("{} elements for shape {}", data.len(), shape::fmt_shape(&self.shape)),
            ));
        }
        self.data = Arc::new(data);
        Ok(())
    }

    pub(crate) fn node(&self) -> Option<&Arc<Node<E>>> {
        self.node.as_ref()
    }

    /// Constructs an op output, attaching the backward closure only when
    /// recording is on and some parent participates in the graph.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: BackwardFn<E>,
    ) -> Self {
        debug_assert_eq!(data.len(), shape::numel(&shape));
        let record = autodiff::is_recording() && parents.iter().any(|p| p.requires_grad());
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(shape),
            data: Arc::new(data),
            node: record.then(|| Arc::new(Node { parents, backward })),
        }
    }

    /// Like `from_op` but shares an existing buffer (reshape-style ops).
    pub(crate) fn from_op_shared(
        shape: Vec<usize>,
        data: Arc<Vec<E>>,
        parents: Vec<Tensor<E>>,
        backward: BackwardFn<E>,
    ) -> Self {
        debug_assert_eq!(data.len(), shape::numel(&shape));
        let record = autodiff::is_recording() && parents.iter().any(|p| p.requires_grad());
        Tensor {
            id: next_id(),
            var: false,
            shape: Arc::new(shape),
            data,
            node: record.then(|| Arc::new(Node { parents, backward })),
        }
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<E>> {
        Arc::clone(&self.data)
    }

    /// Checked-mode guard: rejects non-finite inputs at the op boundary.
    pub(crate) fn check_finite(op: &'static str, inputs: &[&Tensor<E>]) -> Result<()> {
        if !E::CHECKED {
            return Ok(());
        }
        for (i, t) in inputs.iter().enumerate() {
            if let Some(pos) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    op,
                    format!("input {} has non-finite value at flat index {}", i, pos),
                ));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_and_identity() {
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.numel(), 4);
        let c = t.clone();
        assert_eq!(c.id(), t.id());
        assert!(Tensor::<f32>::from_vec(vec![1.0], &[2]).is_err());
    }

    #[test]
    fn cast_round_trip() {
        let t = Tensor::<f64>::from_vec(vec![0.5, -1.25], &[2]).unwrap();
        let f: Tensor<f32> = t.cast();
        let b: Tensor<f64> = f.cast();
        assert_eq!(b.data(), t.data());
    }

    #[test]
    fn checked_mode_rejects_nan() {
        let t = Tensor::<f64>::from_vec(vec![1.0, f64::NAN], &[2]).unwrap();
        assert!(Tensor::check_finite("test", &[&t]).is_err());
        let ok = Tensor::<f32>::from_vec(vec![1.0, f32::NAN], &[2]).unwrap();
        // f32 is the unchecked configuration.
        assert!(Tensor::check_finite("test", &[&ok]).is_ok());
    }

    #[test]
    fn fan_in_init_stays_bounded() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let t = Tensor::<f32>::rand_fan_in(&[1000], 64, &mut rng);
        let bound = 1.0 / 8.0 + 1e-7;
        assert!(t.data().iter().any(|v| v.abs() > 0.06));
        for &v in t.data() {
            assert!(v.abs() <= bound);
        }
    }
}

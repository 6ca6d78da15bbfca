//! Reverse-mode differentiation over the implicit op graph.
//!
//! Tensor ids are allocated monotonically and an op's inputs always predate
//! its output, so visiting reachable nodes in descending id order is a valid
//! reverse topological order. Gradients accumulate by addition, which covers
//! fan-out (one tensor consumed by several ops) and repeated-parent ops alike.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

thread_local! {
    static RECORDING: Cell<bool> = const { Cell::new(true) };
}

pub(crate) fn is_recording() -> bool {
    RECORDING.with(|r| r.get())
}

struct RecordingGuard {
    prev: bool,
}

impl Drop for RecordingGuard {
    fn drop(&mut self) {
        RECORDING.with(|r| r.set(self.prev));
    }
}

/// Runs `f` with graph recording disabled on this thread. Ops executed inside
/// produce plain leaves; nesting restores the previous state on exit, panics
/// included.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = {
        let prev = RECORDING.with(|r| r.replace(false));
        RecordingGuard { prev }
    };
    f()
}

/// Gradients of a scalar with respect to the `var` leaves it reaches, keyed
/// by tensor identity.
pub struct Gradients<E: Elem> {
    map: HashMap<u64, Vec<E>>,
}

impl<E: Elem> Gradients<E> {
    pub fn get(&self, t: &Tensor<E>) -> Option<&[E]> {
        self.map.get(&t.id()).map(|v| v.as_slice())
    }

    /// Gradient buffer for `t`, zeros when the loss did not reach it.
    pub fn get_or_zeros(&self, t: &Tensor<E>) -> Vec<E> {
        match self.map.get(&t.id()) {
            Some(g) => g.clone(),
            None => vec![E::zero(); t.numel()],
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Differentiates `loss` (a scalar) with respect to every reachable `var`
/// leaf. The graph is traversed once; intermediate gradients are dropped as
/// soon as their node has been processed.
pub fn backward<E: Elem>(loss: &Tensor<E>) -> Result<Gradients<E>> {
    if loss.numel() != 1 {
        return Err(Error::contract(
            "backward",
            format!("loss must be scalar, got {} elements", loss.numel()),
        ));
    }
    if !loss.requires_grad() {
        return Err(Error::contract(
            "backward",
            "loss is not connected to any differentiable leaf",
        ));
    }
    if E::CHECKED && !loss.data()[0].is_finite() {
        return Err(Error::numeric("backward", "loss is non-finite"));
    }

    // Reachable interior nodes, keyed by id.
    let mut nodes: HashMap<u64, Tensor<E>> = HashMap::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![loss.clone()];
    while let Some(t) = stack.pop() {
        if !seen.insert(t.id()) {
            continue;
        }
        if let Some(node) = t.node() {
            for p in &node.parents {
                stack.push(p.clone());
            }
            nodes.insert(t.id(), t);
        }
    }

    let mut grads: HashMap<u64, Vec<E>> = HashMap::new();
    grads.insert(loss.id(), vec![E::one()]);

    let mut order: Vec<u64> = nodes.keys().copied().collect();
    order.sort_unstable_by(|a, b| b.cmp(a));

    for id in order {
        let t = &nodes[&id];
        // Nodes reachable from the loss but without incoming gradient carry
        // nothing (e.g. an input of a zero-weighted branch is still reachable).
        let Some(g) = grads.remove(&id) else { continue };
        let node = t.node().expect("interior node");
        let needs: Vec<bool> = node.parents.iter().map(|p| p.requires_grad()).collect();
        let parent_grads = (node.backward)(&g, &needs);
        debug_assert_eq!(parent_grads.len(), node.parents.len());
        for (parent, pg) in node.parents.iter().zip(parent_grads) {
            let Some(pg) = pg else { continue };
            debug_assert_eq!(pg.len(), parent.numel());
            if E::CHECKED {
                if let Some(pos) = pg.iter().position(|v| !v.is_finite()) {
                    return Err(Error::numeric(
                        "backward",
                        format!("non-finite gradient for tensor {} at flat index {}", parent.id(), pos),
                    ));
                }
            }
            match grads.entry(parent.id()) {
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    for (a, b) in e.get_mut().iter_mut().zip(&pg) {
                        *a = *a + *b;
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(pg);
                }
            }
        }
        if t.is_var() {
            grads.insert(id, g);
        }
    }

    Ok(Gradients { map: grads })
}

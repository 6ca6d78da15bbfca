//! Adam with bias correction, the step-decay schedule, and EMA shadowing.
//!
//! Moment and shadow buffers are keyed by hierarchical parameter name, so
//! they serialize into checkpoints and survive a model rebuild.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::model::GtfModel;
use crate::tensor::autodiff::Gradients;
use crate::tensor::{Elem, Tensor};

/// A named collection of trainable tensors the optimizer can walk.
pub trait ParamSet<E: Elem> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<E>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<E>));
}

impl<E: Elem> ParamSet<E> for GtfModel<E> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        GtfModel::visit(self, "", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        GtfModel::visit_mut(self, "", f);
    }
}

/// Piecewise-constant decay: lr0 * gamma^floor(epoch / step_size).
pub fn steplr(lr0: f64, epoch: usize, step_size: usize, gamma: f64) -> f64 {
    lr0 * gamma.powi((epoch / step_size.max(1)) as i32)
}

/// Adam with beta = (0.9, 0.999), eps = 1e-8 and bias correction. A step
/// whose gradients contain a non-finite value is skipped wholesale (no
/// parameter or moment is touched) and counted.
pub struct Adam<E: Elem> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<E>>,
    v: BTreeMap<String, Vec<E>>,
    skipped: u64,
}

impl<E: Elem> Adam<E> {
    pub fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            skipped: 0,
        }
    }

    /// Resumes from checkpointed moments.
    pub fn with_state(step: u64, m: BTreeMap<String, Vec<E>>, v: BTreeMap<String, Vec<E>>) -> Self {
        Adam { step, m, v, ..Adam::new() }
    }

    /// Applies one update at learning rate `lr`. Returns false (and counts a
    /// warning) when a non-finite gradient forced the step to be skipped.
    pub fn step(
        &mut self,
        params: &mut dyn ParamSet<E>,
        grads: &Gradients<E>,
        lr: f64,
    ) -> Result<bool> {
        let mut finite = true;
        params.visit(&mut |_, p| {
            if let Some(g) = grads.get(p) {
                finite &= g.iter().all(|v| v.is_finite());
            }
        });
        if !finite {
            self.skipped += 1;
            return Ok(false);
        }

        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut failure = None;
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        params.visit_mut(&mut |name, p| {
            if failure.is_some() {
                return;
            }
            let n = p.numel();
            let g = grads.get_or_zeros(p);
            let m = m_map
                .entry(name.to_string())
                .or_insert_with(|| vec![E::zero(); n]);
            let v = v_map
                .entry(name.to_string())
                .or_insert_with(|| vec![E::zero(); n]);
            let mut data = p.data().to_vec();
            for i in 0..n {
                let gi = g[i].as_f64();
                let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                m[i] = E::from_f64(mi);
                v[i] = E::from_f64(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                data[i] = E::from_f64(data[i].as_f64() - update);
            }
            if let Err(e) = p.set_data(data) {
                failure = Some(e);
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(true),
        }
    }

    pub fn applied(&self) -> u64 {
        self.step
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn moments(&self) -> (&BTreeMap<String, Vec<E>>, &BTreeMap<String, Vec<E>>) {
        (&self.m, &self.v)
    }
}

impl<E: Elem> Default for Adam<E> {
    fn default() -> Self {
        Adam::new()
    }
}

/// Exponential moving average of parameters. The shadow starts as a copy of
/// the parameters, so an untrained EMA model equals the raw model.
pub struct Ema<E: Elem> {
    decay: f64,
    shadow: BTreeMap<String, Vec<E>>,
}

impl<E: Elem> Ema<E> {
    pub fn new(decay: f64, params: &dyn ParamSet<E>) -> Self {
        let mut shadow = BTreeMap::new();
        params.visit(&mut |name, p| {
            shadow.insert(name.to_string(), p.data().to_vec());
        });
        Ema { decay, shadow }
    }

    /// Resumes from a checkpointed shadow.
    pub fn with_state(decay: f64, shadow: BTreeMap<String, Vec<E>>) -> Self {
        Ema { decay, shadow }
    }

    /// shadow <- decay * shadow + (1 - decay) * params.
    pub fn update(&mut self, params: &dyn ParamSet<E>) {
        let d = self.decay;
        params.visit(&mut |name, p| {
            let s = self
                .shadow
                .entry(name.to_string())
                .or_insert_with(|| p.data().to_vec());
            for (si, pi) in s.iter_mut().zip(p.data()) {
                *si = E::from_f64(d * si.as_f64() + (1.0 - d) * pi.as_f64());
            }
        });
    }

    pub fn shadow(&self) -> &BTreeMap<String, Vec<E>> {
        &self.shadow
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::autodiff::backward;

    struct Toy {
        w: Tensor<f64>,
    }

    impl Toy {
        fn new(data: Vec<f64>) -> Self {
            let n = data.len();
            Toy { w: Tensor::from_vec(data, &[n]).unwrap().var() }
        }
    }

    impl ParamSet<f64> for Toy {
        fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<f64>)) {
            f("w", &self.w);
        }

        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>)) {
            f("w", &mut self.w);
        }
    }

    fn grads_for(toy: &Toy, g: &[f64]) -> Gradients<f64> {
        let weights = Tensor::from_vec(g.to_vec(), toy.w.shape()).unwrap();
        let loss = toy.w.mul(&weights).unwrap().sum_all().unwrap();
        backward(&loss).unwrap()
    }

    #[test]
    fn schedule_matches_published_breakpoints() {
        let lr0 = 4e-4;
        assert_eq!(steplr(lr0, 0, 80, 0.5), lr0);
        assert_eq!(steplr(lr0, 79, 80, 0.5), lr0);
        assert_eq!(steplr(lr0, 80, 80, 0.5), lr0 * 0.5);
        assert_eq!(steplr(lr0, 160, 80, 0.5), lr0 * 0.25);
        let mut prev = f64::INFINITY;
        for epoch in 0..400 {
            let lr = steplr(lr0, epoch, 80, 0.5);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        let mut toy = Toy::new(vec![0.0]);
        let grads = grads_for(&toy, &[1.0]);
        let mut adam = Adam::new();
        assert!(adam.step(&mut toy, &grads, 0.01).unwrap());
        // mhat = vhat = 1 at step 1, so the update is lr / (1 + eps).
        assert!((toy.w.data()[0] + 0.01).abs() < 1e-9);
        assert_eq!(adam.applied(), 1);
    }

    #[test]
    fn moments_follow_hand_rolled_recurrence() {
        let mut toy = Toy::new(vec![0.5, -0.25, 2.0]);
        let g1 = [1.0, -2.0, 0.5];
        let g2 = [-0.5, 0.25, 3.0];
        let mut adam = Adam::new();
        let lr = 1e-3;

        let mut w: Vec<f64> = toy.w.data().to_vec();
        let mut m = [0.0; 3];
        let mut v = [0.0; 3];
        for (t, g) in [g1, g2].iter().enumerate() {
            let grads = grads_for(&toy, g);
            adam.step(&mut toy, &grads, lr).unwrap();
            let c1 = 1.0 - 0.9f64.powi(t as i32 + 1);
            let c2 = 1.0 - 0.999f64.powi(t as i32 + 1);
            for i in 0..3 {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        }
        let (am, av) = adam.moments();
        for i in 0..3 {
            assert!((toy.w.data()[i] - w[i]).abs() < 1e-15);
            assert!((am["w"][i] - m[i]).abs() < 1e-15);
            assert!((av["w"][i] - v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradients_leave_fresh_params_alone_and_decay_moments() {
        let mut toy = Toy::new(vec![1.0, 2.0]);
        let mut adam = Adam::new();
        let zeros = grads_for(&toy, &[0.0, 0.0]);
        adam.step(&mut toy, &zeros, 0.01).unwrap();
        assert_eq!(toy.w.data(), &[1.0, 2.0]);

        let ones = grads_for(&toy, &[1.0, 1.0]);
        adam.step(&mut toy, &ones, 0.01).unwrap();
        let m_before = adam.moments().0["w"].clone();
        adam.step(&mut toy, &zeros, 0.01).unwrap();
        let (m, v) = adam.moments();
        for i in 0..2 {
            assert!((m["w"][i] - 0.9 * m_before[i]).abs() < 1e-15);
        }
        assert!(v["w"].iter().all(|x| *x > 0.0));
    }

    #[test]
    fn non_finite_gradient_skips_the_step() {
        // f32 ops are unchecked, so a NaN can reach the optimizer.
        let mut toy = Toy32 { w: Tensor::<f32>::ones(&[1]).var() };
        let bad = Tensor::<f32>::from_vec(vec![f32::NAN], &[1]).unwrap();
        let loss = toy.w.mul(&bad).unwrap().sum_all().unwrap();
        let grads = backward(&loss).unwrap();
        let mut adam = Adam::<f32>::new();
        assert!(!adam.step(&mut toy, &grads, 0.01).unwrap());
        assert_eq!(toy.w.data(), &[1.0]);
        assert_eq!(adam.skipped(), 1);
        assert_eq!(adam.applied(), 0);

        // A finite step afterwards still works.
        let ok = Tensor::<f32>::ones(&[1]);
        let loss = toy.w.mul(&ok).unwrap().sum_all().unwrap();
        let grads = backward(&loss).unwrap();
        assert!(adam.step(&mut toy, &grads, 0.01).unwrap());
        assert_eq!(adam.applied(), 1);
    }

    struct Toy32 {
        w: Tensor<f32>,
    }

    impl ParamSet<f32> for Toy32 {
        fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<f32>)) {
            f("w", &self.w);
        }

        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f32>)) {
            f("w", &mut self.w);
        }
    }

    #[test]
    fn ema_edge_decays() {
        let toy = Toy::new(vec![3.0]);
        let mut frozen = Ema::with_state(1.0, BTreeMap::from([("w".to_string(), vec![7.0])]));
        frozen.update(&toy);
        assert_eq!(frozen.shadow()["w"], vec![7.0]);

        let mut tracking = Ema::with_state(0.0, BTreeMap::from([("w".to_string(), vec![7.0])]));
        tracking.update(&toy);
        assert_eq!(tracking.shadow()["w"], vec![3.0]);
    }

    #[test]
    fn ema_gap_shrinks_geometrically() {
        let toy = Toy::new(vec![1.0]);
        let decay = 0.9;
        let mut ema = Ema::with_state(decay, BTreeMap::from([("w".to_string(), vec![2.0])]));
        for n in 1..=20 {
            ema.update(&toy);
            let want = 1.0 + decay.powi(n);
            assert!((ema.shadow()["w"][0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_initial_shadow_equals_params() {
        let toy = Toy::new(vec![0.25, -4.0]);
        let ema = Ema::new(0.999, &toy);
        assert_eq!(ema.shadow()["w"], vec![0.25, -4.0]);
    }
}

//! First-order optimizers over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::nn::ParamStore;
use crate::scalar::Scalar;

pub const MOMENTUM: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Heavy-ball momentum.
    Momentum,
    /// Adaptive moment estimation.
    #[default]
    Adam,
}

/// Optimizer buffers; `first`/`second` mirror the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub kind: OptimizerKind,
    /// Number of updates applied so far.
    pub updates: u64,
    pub first: Option<ParamStore<S>>,
    pub second: Option<ParamStore<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(kind: OptimizerKind, params: &ParamStore<S>) -> Self {
        let (first, second) = match kind {
            OptimizerKind::Sgd => (None, None),
            OptimizerKind::Momentum => (Some(params.zeros_like()), None),
            OptimizerKind::Adam => (Some(params.zeros_like()), Some(params.zeros_like())),
        };
        Self {
            kind,
            updates: 0,
            first,
            second,
        }
    }

    /// Applies one descent step with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &ParamStore<S>, lr: f64) {
        debug_assert!(params.same_layout(grads));
        self.updates += 1;
        let lr_s = S::of(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, (_, g)) in params.tensors_mut().zip(grads.iter()) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= lr_s * *d;
                    }
                }
            }
            OptimizerKind::Momentum => {
                let mu = S::of(MOMENTUM);
                let velocity = self.first.as_mut().expect("momentum buffer");
                for ((p, v), (_, g)) in params.tensors_mut().zip(velocity.tensors_mut()).zip(grads.iter()) {
                    for ((w, v), d) in p.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                        *v = mu * *v + *d;
                        *w -= lr_s * *v;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.updates as i32;
                let (b1, b2) = (S::of(ADAM_BETA1), S::of(ADAM_BETA2));
                let c1 = S::of(1.0 - ADAM_BETA1.powi(t));
                let c2 = S::of(1.0 - ADAM_BETA2.powi(t));
                let eps = S::of(ADAM_EPSILON);
                let m = self.first.as_mut().expect("first moment");
                let v = self.second.as_mut().expect("second moment");
                for (((p, m), v), (_, g)) in params
                    .tensors_mut()
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                    .zip(grads.iter())
                {
                    for (((w, m), v), d) in p
                        .data
                        .iter_mut()
                        .zip(m.data.iter_mut())
                        .zip(v.data.iter_mut())
                        .zip(&g.data)
                    {
                        *m = b1 * *m + (S::one() - b1) * *d;
                        *v = b2 * *v + (S::one() - b2) * *d * *d;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr_s * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grad(p: &ParamStore<f64>) -> ParamStore<f64> {
        // f(w) = sum (w - 3)^2
        let mut g = p.zeros_like();
        for (gt, (_, pt)) in g.tensors_mut().zip(p.iter()) {
            for (gv, pv) in gt.data.iter_mut().zip(&pt.data) {
                *gv = 2.0 * (pv - 3.0);
            }
        }
        g
    }

    #[test]
    fn every_optimizer_minimizes_a_quadratic() {
        for (kind, lr) in [
            (OptimizerKind::Sgd, 0.1),
            (OptimizerKind::Momentum, 0.02),
            (OptimizerKind::Adam, 0.1),
        ] {
            let mut p = ParamStore::new();
            p.insert("w", vec![3], vec![0.0, -1.0, 5.0]);
            let mut opt = OptimizerState::new(kind, &p);
            for _ in 0..500 {
                let g = quadratic_grad(&p);
                opt.step(&mut p, &g, lr);
            }
            for v in &p.by_name("w").unwrap().data {
                assert!((v - 3.0).abs() < 1e-3, "{kind:?}: {v}");
            }
            assert_eq!(opt.updates, 500);
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", vec![2], vec![1.0, 1.0]);
        let mut g = p.zeros_like();
        g.flat_set(0, 0.5);
        g.flat_set(1, -20.0);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, &p);
        opt.step(&mut p, &g, 0.01);
        assert!((p.flat_get(0) - 0.99).abs() < 1e-6);
        assert!((p.flat_get(1) - 1.01).abs() < 1e-6);
    }
}

use serde::{Deserialize, Serialize};

use crate::nn::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            store
                .ids()
                .map(|id| vec![0.0; store.value(id).len()])
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    /// Applies one bias-corrected Adam update to every parameter, then
    /// zeroes the gradients.
    pub fn step(&mut self, store: &mut ParamStore, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let (value, grad) = store.value_and_grad_mut(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, g)) in value
                .values_mut()
                .iter_mut()
                .zip(grad.values_mut().iter_mut())
                .enumerate()
            {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * *g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * *g * *g;
                let update = cfg.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.epsilon);
                if update != 0.0 {
                    *w -= update;
                }
                *g = 0.0;
            }
        }
    }
}

/// One Adam step over `store` with `state`.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) {
    state.step(store, cfg);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use crate::tensor::Tensor;

    fn set_grad(store: &mut ParamStore, name: &str, g: f64) {
        let id = store.require(name).unwrap();
        let mut tape = Tape::new(store);
        let p = tape.param(id);
        let s = tape.sum(p);
        let l = tape.scale(s, g);
        let grads = tape.backward(l).unwrap();
        store.accumulate(&grads);
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![0.3, -1.2])).unwrap();
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &mut st, &AdamConfig::default());
        assert_eq!(s.get("w").unwrap().values(), &[0.3, -1.2]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0)).unwrap();
        set_grad(&mut s, "w", 1.0);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        adam_step(&mut s, &mut st, &cfg);
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε).
        let w = s.get("w").unwrap().values()[0];
        assert!((w - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(s.grad(s.require("w").unwrap()).values(), &[0.0]);
    }

    #[test]
    fn symmetric_params_get_identical_updates() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(0.5)).unwrap();
        s.insert("b", Tensor::scalar(0.5)).unwrap();
        let mut st = AdamState::new(&s);
        for _ in 0..3 {
            set_grad(&mut s, "a", 0.7);
            set_grad(&mut s, "b", 0.7);
            adam_step(&mut s, &mut st, &AdamConfig::default());
        }
        assert_eq!(s.get("a").unwrap().values(), s.get("b").unwrap().values());
    }

    #[test]
    fn zero_lr_is_bitwise_noop() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
        set_grad(&mut s, "w", 5.0);
        let before = s.get("w").unwrap().clone();
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig {
            lr: 0.0,
            ..Default::default()
        };
        adam_step(&mut s, &mut st, &cfg);
        assert_eq!(s.get("w").unwrap(), &before);
    }
}

use std::collections::BTreeMap;

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T: Scalar> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// One bias-corrected Adam update of `param` in place; `t` is the 1-based step.
pub fn adam_step<T: Scalar>(param: &mut [T], grad: &[T], state: &mut AdamState<T>, cfg: &AdamConfig, t: u64) {
    assert_eq!(param.len(), grad.len(), "adam_step: parameter/gradient length");
    if state.m.len() != param.len() {
        state.m = vec![T::ZERO; param.len()];
        state.v = vec![T::ZERO; param.len()];
    }
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (T::ONE - b1) * g;
        *v = b2 * *v + (T::ONE - b2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *p -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Adam over a set of named parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    states: BTreeMap<String, AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            states: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one step to every `(name, parameter, gradient)` triple.
    pub fn step<'a>(&mut self, updates: impl IntoIterator<Item = (&'a str, &'a mut [T], &'a [T])>) {
        self.step += 1;
        for (name, param, grad) in updates {
            let state = self.states.entry(name.to_string()).or_default();
            adam_step(param, grad, state, &self.config, self.step);
        }
    }
}

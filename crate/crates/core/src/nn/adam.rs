use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::Scalar;

thread_local! {
    static STEPS: Cell<u64> = const { Cell::new(0) };
}

/// Optimizer steps taken on the current thread so far.
pub fn optimizer_steps() -> u64 {
    STEPS.with(|s| s.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            config,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected Adam update of `w` in place.
    pub fn step(&mut self, grad: &[T], w: &mut [T]) -> Result<()> {
        check_len(self.m.len(), grad.len(), "Adam gradient")?;
        check_len(self.m.len(), w.len(), "Adam weights")?;
        self.step += 1;
        STEPS.with(|s| s.set(s.get() + 1));
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let lr = T::of(c.lr);
        let eps = T::of(c.eps);
        for (((wi, gi), mi), vi) in w.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *mi = b1 * *mi + (T::one() - b1) * *gi;
            *vi = b2 * *vi + (T::one() - b2) * *gi * *gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *wi -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

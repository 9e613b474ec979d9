//! Adam optimizer with global-norm gradient clipping.

use thiserror::Error;

use super::params::ParamStore;
use super::tape::Gradients;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient encountered at step {step}")]
    NonFiniteGradient { step: usize },
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    t: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            t: 0,
            m: store.entries().map(|p| vec![0.0; p.data.len()]).collect(),
            v: store.entries().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    /// One update. The gradient is clipped to `clip_norm` by global L2 norm
    /// before the moment updates.
    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Gradients) -> Result<(), OptimError> {
        if !grads.is_finite() {
            return Err(OptimError::NonFiniteGradient { step: self.t });
        }
        let norm = grads.global_norm();
        if norm > self.clip_norm {
            grads.scale(self.clip_norm / norm);
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for idx in 0..store.len() {
            let g = &grads.by_entry[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let p = &mut store.entry_mut(idx).data;
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / b1t;
                let vhat = v[k] / b2t;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::Result;
use crate::networks::ParamStore;
use crate::ops::scalar;

/// Adam with bias correction. Moments are keyed by parameter path so they
/// can be checkpointed alongside the parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState,
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    /// Number of updates applied so far.
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            state: AdamState::default(),
        }
    }

    /// Global L2 norm of the gradients of all parameters that have one.
    pub fn grad_norm(params: &ParamStore, grads: &GradStore) -> Result<f64> {
        let mut sq = 0.0;
        for (_, var) in params.iter() {
            if let Some(g) = grads.get(var.as_tensor()) {
                sq += scalar(&g.sqr()?.sum_all()?)?;
            }
        }
        Ok(sq.sqrt())
    }

    /// One update. Gradients are rescaled so their global norm is at most
    /// `clip`. Parameters without a gradient are left untouched. Returns the
    /// gradient norm before clipping.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64, clip: Option<f64>) -> Result<f64> {
        let norm = Self::grad_norm(params, grads)?;
        let scale = match clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.state.t += 1;
        let t = self.state.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (path, var) in params.iter() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = (g.detach() * scale)?;
            let m = match self.state.m.get(path) {
                Some(m) => ((m * self.beta1)? + (&g * (1.0 - self.beta1))?)?,
                None => (&g * (1.0 - self.beta1))?,
            };
            let g2 = g.sqr()?;
            let v = match self.state.v.get(path) {
                Some(v) => ((v * self.beta2)? + (&g2 * (1.0 - self.beta2))?)?,
                None => (&g2 * (1.0 - self.beta2))?,
            };
            let denom = ((&v / bc2)?.sqrt()? + self.eps)?;
            let update = ((&m / bc1)? / denom)?;
            var.set(&var.as_tensor().sub(&(update * lr)?)?)?;
            self.state.m.insert(path.clone(), m);
            self.state.v.insert(path.clone(), v);
        }
        Ok(norm)
    }
}

//! Adam optimizer over a [`ParamStore`].
//!
//! Moments are kept in f64 regardless of the model element type; moment slots
//! parallel the store's parameter order. A step with any non-finite gradient
//! is skipped outright: parameters, moments and the step counter all stay
//! untouched so a later clean batch resumes as if the bad one never happened.

use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::{GradStore, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient contained NaN or infinity; names the first offending parameter.
    SkippedNonFinite { param: String },
}

pub struct AdamState {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(store: &ParamStore<T>, cfg: AdamConfig) -> Self {
        let m = store.iter().map(|(_, t)| vec![0.0; t.shape().numel()]).collect();
        let v = store.iter().map(|(_, t)| vec![0.0; t.shape().numel()]).collect();
        AdamState { cfg, t: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with the given learning rate. Parameters without a gradient
    /// entry decay their moments against a zero gradient.
    pub fn step<T: Scalar>(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &GradStore<T>,
        lr: f64,
    ) -> Result<StepOutcome> {
        for i in 0..store.len() {
            if let Some(g) = grads.get(store.tensor_at(i)) {
                if g.iter().any(|v| !v.is_finite()) {
                    return Ok(StepOutcome::SkippedNonFinite {
                        param: store.name_at(i).to_string(),
                    });
                }
            }
        }

        self.t += 1;
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..store.len() {
            let grad: Option<Vec<f64>> = grads
                .get(store.tensor_at(i))
                .map(|g| g.iter().map(|v| v.to_f64()).collect());
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            store.update_at(i, |theta| {
                for j in 0..theta.len() {
                    let g = grad.as_ref().map_or(0.0, |g| g[j]);
                    m[j] = b1 * m[j] + (1.0 - b1) * g;
                    v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    let delta = lr * m_hat / (v_hat.sqrt() + eps);
                    theta[j] = T::from_f64(theta[j].to_f64() - delta);
                }
            })?;
        }
        Ok(StepOutcome::Applied)
    }
}

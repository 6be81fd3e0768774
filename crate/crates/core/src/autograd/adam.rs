use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are aligned with the parameter store
/// they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`. Nothing is modified when any
    /// gradient entry is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        self.step_scheduled(params, grads, |_| lr)
    }

    /// One update with the learning rate chosen by `schedule(step)`, where
    /// `step` is the 1-based index of the update being applied.
    pub fn step_scheduled(
        &mut self,
        params: &mut ParamStore,
        grads: &Gradients,
        schedule: impl Fn(u64) -> f64,
    ) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} parameters, {} gradients, {} moments",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for id in params.ids() {
            if grads.get(id).shape() != params.get(id).shape() {
                return Err(Error::shape("adam_step", format!("gradient shape for `{}`", params.name(id))));
            }
            if !grads.get(id).all_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        self.step += 1;
        let lr = schedule(self.step);
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids() {
            let g = grads.get(id).data();
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    /// Moments and step count as named tensors, for checkpointing.
    pub fn to_store(&self, params: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        out.add("adam.step", Tensor::scalar(self.step as f64));
        for (i, (name, _)) in params.iter().enumerate() {
            out.add(format!("adam.m.{name}"), self.m[i].clone());
            out.add(format!("adam.v.{name}"), self.v[i].clone());
        }
        out
    }

    pub fn from_store(params: &ParamStore, saved: &ParamStore, config: AdamConfig) -> Result<Self> {
        let get = |name: &str| {
            saved
                .find(name)
                .map(|id| saved.get(id).clone())
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state missing `{name}`")))
        };
        let step = get("adam.step")?.item() as u64;
        let mut state = Self::new(params, config);
        state.step = step;
        for (i, (name, t)) in params.iter().enumerate() {
            let m = get(&format!("adam.m.{name}"))?;
            let v = get(&format!("adam.v.{name}"))?;
            if m.shape() != t.shape() || v.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("optimizer moment shape for `{name}`")));
            }
            state.m[i] = m;
            state.v[i] = v;
        }
        Ok(state)
    }
}

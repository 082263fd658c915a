//! Decoupled-weight-decay Adam, gradient clipping, and the learning-rate
//! schedule. All update arithmetic runs in f64; parameters and moments are
//! stored in f32.

use std::collections::BTreeMap;

use super::{HarnessError, TrainConfig};
use crate::model::{GradBuffer, ParamStore};
use crate::numerics::Tensor;

/// Learning rate after `epoch` (fractional) epochs:
/// `lr₀ · factor^(epoch / every)` — a continuous decay, not a step schedule.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.lr_decay_factor.powf(epoch / cfg.lr_decay_every)
}

/// Scale `grads` so its global L2 norm is at most `clip`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut GradBuffer, clip: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip {
        grads.scale(clip / norm);
    }
    norm
}

/// Adam with decoupled weight decay:
/// `p ← p − lr·m̂/(√v̂+ε) − lr·wd·p`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor<f32>> = store
            .ids()
            .map(|id| Tensor::zeros(store.get(id).shape().to_vec()))
            .collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Completed update steps.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update with learning rate `lr`.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &GradBuffer,
        lr: f64,
    ) -> Result<(), HarnessError> {
        if self.m.len() != store.len() {
            return Err(HarnessError::State(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (id, (m, v)) in store.ids().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let grad = grads.get(id);
            let param = store.get_mut(id);
            if grad.shape() != param.shape() {
                return Err(HarnessError::State(format!(
                    "gradient shape {:?} does not match parameter shape {:?}",
                    grad.shape(),
                    param.shape()
                )));
            }
            // p − lr·m̂/(√v̂+ε) − lr·wd·p, with the decay factored so that a
            // zero gradient shrinks p by exactly (1 − lr·wd) in f64.
            let decay = 1.0 - lr * self.weight_decay;
            for i in 0..param.numel() {
                let g = grad.data()[i] as f64;
                let m_new = self.beta1 * m.data()[i] as f64 + (1.0 - self.beta1) * g;
                let v_new = self.beta2 * v.data()[i] as f64 + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = m_new as f32;
                v.data_mut()[i] = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                let p = param.data()[i] as f64;
                param.data_mut()[i] = (p * decay - lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }

    /// Moments and step counter as checkpoint tensors, keyed `opt.m.<name>`,
    /// `opt.v.<name>`, and `opt.step`.
    pub fn to_tensors(&self, store: &ParamStore) -> BTreeMap<String, Tensor<f32>> {
        let mut map = BTreeMap::new();
        for (id, (m, v)) in store.ids().zip(self.m.iter().zip(self.v.iter())) {
            let name = store.name_of(id);
            map.insert(format!("opt.m.{name}"), m.clone());
            map.insert(format!("opt.v.{name}"), v.clone());
        }
        map.insert("opt.step".to_string(), Tensor::scalar(self.step as f32));
        map
    }

    /// Restore moments and step counter saved by [`AdamW::to_tensors`].
    pub fn load_tensors(
        &mut self,
        store: &ParamStore,
        map: &BTreeMap<String, Tensor<f32>>,
    ) -> Result<(), HarnessError> {
        let step = map
            .get("opt.step")
            .ok_or_else(|| HarnessError::State("missing opt.step".into()))?;
        for (id, (m, v)) in store.ids().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let name = store.name_of(id);
            for (slot, key) in [(&mut *m, format!("opt.m.{name}")), (v, format!("opt.v.{name}"))] {
                let t = map
                    .get(&key)
                    .ok_or_else(|| HarnessError::State(format!("missing {key}")))?;
                if t.shape() != slot.shape() {
                    return Err(HarnessError::State(format!(
                        "{key}: shape {:?} does not match parameter shape {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t.clone();
            }
        }
        self.step = step.item() as u64;
        Ok(())
    }
}

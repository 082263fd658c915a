//! Training and evaluation harness: decoupled-weight-decay Adam, the
//! continuous learning-rate schedule, the batched training loop, metric
//! aggregation over categories and difficulty tiers, and checkpoint bundles.

mod ckpt;
mod eval;
mod optim;
mod train;

pub use ckpt::{load_model, load_optimizer, save_bundle};
pub use eval::{evaluate, evaluate_with, GroupMetrics, MetricsReport};
pub use optim::{clip_global_norm, lr_at, AdamW};
pub use train::{LogRecord, TrainSet, Trainer};

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::geom::GeomError;
use crate::model::ModelError;
use crate::numerics::{CheckpointError, DistanceNorm};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("optimizer state: {0}")]
    State(String),
    #[error("train config: {0}")]
    BadConfig(String),
    #[error("{0} is empty")]
    Empty(&'static str),
}

/// Optimization hyperparameters. Defaults follow the published recipe:
/// learning rate and weight decay 0.0005, decay factor 0.9 applied
/// continuously per 20 epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_factor: f64,
    /// Epoch period of the decay factor; the exponent is real-valued.
    pub lr_decay_every: f64,
    pub seed: u64,
    /// Gradient clip threshold on the global L2 norm.
    pub grad_clip: f64,
    /// Chamfer norm of the training objective.
    pub loss_norm: DistanceNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0005,
            weight_decay: 0.0005,
            batch_size: 4,
            epochs: 100,
            lr_decay_factor: 0.9,
            lr_decay_every: 20.0,
            seed: 0,
            grad_clip: 10.0,
            loss_norm: DistanceNorm::L2Squared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!(
                "lr_decay_factor {} must be in (0, 1]",
                self.lr_decay_factor
            ));
        }
        if !(self.lr_decay_every > 0.0) {
            return bad(format!(
                "lr_decay_every {} must be positive",
                self.lr_decay_every
            ));
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip {} must be positive", self.grad_clip));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_published_recipe() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lr, 0.0005);
        assert_eq!(cfg.weight_decay, 0.0005);
        assert_eq!(cfg.lr_decay_factor, 0.9);
        assert_eq!(cfg.lr_decay_every, 20.0);
    }

    #[test]
    fn validation_catches_bad_values() {
        for mutate in [
            (|c: &mut TrainConfig| c.lr = 0.0) as fn(&mut TrainConfig),
            |c| c.weight_decay = -1.0,
            |c| c.batch_size = 0,
            |c| c.lr_decay_factor = 0.0,
            |c| c.lr_decay_factor = 1.5,
            |c| c.lr_decay_every = 0.0,
            |c| c.grad_clip = 0.0,
        ] {
            let mut cfg = TrainConfig::default();
            mutate(&mut cfg);
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn config_json_round_trip_rejects_unknown_keys() {
        let cfg = TrainConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), cfg);
        let with_extra = json.replace("\"seed\":0", "\"seed\":0,\"momentum\":0.9");
        assert!(serde_json::from_str::<TrainConfig>(&with_extra).is_err());
        // Partial configs fill in defaults.
        let partial: TrainConfig = serde_json::from_str("{\"lr\":0.001}").unwrap();
        assert_eq!(partial.lr, 0.001);
        assert_eq!(partial.batch_size, 4);
    }
}

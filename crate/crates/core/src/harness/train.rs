//! The batched training loop: per-step seeded sampling, gradient averaging,
//! clipping, and optimizer updates. Everything is a pure function of
//! (seed, config, dataset), so interrupted runs replay exactly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use serde::{Deserialize, Serialize};

use super::optim::{clip_global_norm, lr_at, AdamW};
use super::{HarnessError, TrainConfig};
use crate::data::{derive_seed, make_train_sample, DatasetSpec};
use crate::geom::PointCloud;
use crate::model::{loss_terms, CompletionModel, GradBuffer, ModelError};
use crate::numerics::{Graph, Tensor};

/// Training corpus: ground-truth clouds plus the sampling distribution that
/// crops them into partial inputs.
#[derive(Clone, Debug)]
pub struct TrainSet {
    /// `(object id, normalized ground-truth cloud)` pairs.
    pub objects: Vec<(String, PointCloud)>,
    pub spec: DatasetSpec,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: f64,
    pub j0: f64,
    pub j1: f64,
    pub j: f64,
    pub lr: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub opt: AdamW,
    step: u64,
}

impl Trainer {
    pub fn new(model: &CompletionModel, cfg: TrainConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        Ok(Trainer {
            opt: AdamW::new(model.params(), cfg.weight_decay),
            cfg,
            step: 0,
        })
    }

    /// Rebuild a trainer from checkpointed optimizer tensors; the step
    /// counter resumes where the save left off.
    pub fn resume(
        model: &CompletionModel,
        cfg: TrainConfig,
        tensors: &BTreeMap<String, Tensor<f32>>,
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut opt = AdamW::new(model.params(), cfg.weight_decay);
        opt.load_tensors(model.params(), tensors)?;
        let step = opt.steps_taken();
        Ok(Trainer { cfg, opt, step })
    }

    /// Completed optimization steps.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self, data: &TrainSet) -> u64 {
        let n = data.objects.len() as u64;
        let b = self.cfg.batch_size as u64;
        n.div_ceil(b)
    }

    pub fn total_steps(&self, data: &TrainSet) -> u64 {
        self.cfg.epochs as u64 * self.steps_per_epoch(data)
    }

    /// Train until `target` total steps have run, invoking `on_log` after
    /// each step. Returns the records for the steps run by this call.
    pub fn run_until(
        &mut self,
        model: &mut CompletionModel,
        data: &TrainSet,
        target: u64,
        mut on_log: impl FnMut(&LogRecord),
    ) -> Result<Vec<LogRecord>, HarnessError> {
        if data.objects.is_empty() {
            return Err(HarnessError::Empty("training set"));
        }
        let mut log = Vec::new();
        while self.step < target {
            let record = self.one_step(model, data)?;
            on_log(&record);
            log.push(record);
        }
        Ok(log)
    }

    /// Train for the configured number of epochs.
    pub fn train(
        &mut self,
        model: &mut CompletionModel,
        data: &TrainSet,
        on_log: impl FnMut(&LogRecord),
    ) -> Result<Vec<LogRecord>, HarnessError> {
        let target = self.total_steps(data);
        self.run_until(model, data, target, on_log)
    }

    fn one_step(
        &mut self,
        model: &mut CompletionModel,
        data: &TrainSet,
    ) -> Result<LogRecord, HarnessError> {
        let step = self.step;
        let epoch = step as f64 / self.steps_per_epoch(data) as f64;
        let lr = lr_at(epoch, &self.cfg);
        let batch = self.cfg.batch_size;

        // All randomness for the step — object choice, crop viewpoints, and
        // dropout masks — derives from (seed, step), so a resumed run draws
        // the same batches as an uninterrupted one.
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(self.cfg.seed, "train_step", step));
        let mut grads = GradBuffer::zeros_like(model.params());
        let (mut j0_sum, mut j1_sum) = (0.0f64, 0.0f64);

        for element in 0..batch {
            let pick = rng.gen_range(0..data.objects.len());
            let (_, gt) = &data.objects[pick];
            let partial = make_train_sample(gt, &data.spec, &mut rng)?;

            let graph_seed =
                derive_seed(self.cfg.seed, "train_graph", step * batch as u64 + element as u64);
            let mut g = Graph::<f32>::new(true, graph_seed);
            let fwd = model.forward(&mut g, &partial, true)?;
            let loss = loss_terms(&mut g, &fwd, gt, self.cfg.loss_norm)?;

            let j0 = g.value(loss.j0).item() as f64;
            let j1 = g.value(loss.j1).item() as f64;
            if !(j0.is_finite() && j1.is_finite()) {
                return Err(HarnessError::NonFiniteLoss { step });
            }
            j0_sum += j0;
            j1_sum += j1;

            g.backward(loss.j).map_err(ModelError::from)?;
            grads.accumulate(&g, &fwd.vars, 1.0 / batch as f64);
        }

        if !grads.is_finite() {
            return Err(HarnessError::NonFiniteLoss { step });
        }
        clip_global_norm(&mut grads, self.cfg.grad_clip);
        self.opt.step(model.params_mut(), &grads, lr)?;
        self.step += 1;

        let b = batch as f64;
        Ok(LogRecord {
            step,
            epoch,
            j0: j0_sum / b,
            j1: j1_sum / b,
            j: (j0_sum + j1_sum) / b,
            lr,
        })
    }
}

//! One-file checkpoints bundling model parameters, the architecture scalars
//! needed to rebuild the network, and (optionally) optimizer state, so a
//! training run can be resumed bit-exactly from disk.

use std::collections::BTreeMap;
use std::path::Path;

use super::optim::AdamW;
use super::HarnessError;
use crate::model::{CompletionModel, ModelConfig};
use crate::numerics::{load_checkpoint, save_checkpoint, Tensor};

/// Write model parameters, architecture metadata, and (optionally) optimizer
/// moments into a single checkpoint file.
pub fn save_bundle(
    path: &Path,
    model: &CompletionModel,
    opt: Option<&AdamW>,
) -> Result<(), HarnessError> {
    let mut map = model.params().to_map();
    map.extend(model.config().to_tensors());
    if let Some(opt) = opt {
        map.extend(opt.to_tensors(model.params()));
    }
    save_checkpoint(path, &map)?;
    Ok(())
}

/// Rebuild a model from a checkpoint written by [`save_bundle`]. The
/// architecture comes from the stored `config.*` scalars; every parameter is
/// then overwritten with its stored tensor, so the result does not depend on
/// any initialization seed. The raw tensor map is returned alongside the
/// model so callers can also restore optimizer state (see [`load_optimizer`]
/// and [`super::Trainer::resume`]).
pub fn load_model(
    path: &Path,
) -> Result<(CompletionModel, BTreeMap<String, Tensor<f32>>), HarnessError> {
    let map = load_checkpoint(path)?;
    let cfg = ModelConfig::from_tensors(&map)?;
    let mut model = CompletionModel::new(cfg, 0)?;
    model.params_mut().load_map(&map)?;
    Ok((model, map))
}

/// Restore optimizer state from a loaded checkpoint map, or `None` when the
/// checkpoint was saved without one (inference-only bundles).
pub fn load_optimizer(
    map: &BTreeMap<String, Tensor<f32>>,
    model: &CompletionModel,
    weight_decay: f64,
) -> Result<Option<AdamW>, HarnessError> {
    if !map.contains_key("opt.step") {
        return Ok(None);
    }
    let mut opt = AdamW::new(model.params(), weight_decay);
    opt.load_tensors(model.params(), map)?;
    Ok(Some(opt))
}

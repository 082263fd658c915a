//! JSON run configuration: model architecture plus training hyperparameters.
//! The schema is strict — an unknown key is an error naming that key, so a
//! typo can never silently fall back to a default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pointfill::data::DatasetSpec;
use pointfill::harness::TrainConfig;
use pointfill::model::ModelConfig;

use crate::error::CliError;

/// Everything a training run needs besides the dataset. All fields are
/// optional in the file; defaults are the desk-scale model and the published
/// optimization recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seed for parameter initialization (training draws derive from
    /// `train.seed`).
    pub model_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            model_seed: 0,
        }
    }
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
    cfg.model.validate().map_err(|e| config_err(path, e))?;
    cfg.train.validate().map_err(|e| config_err(path, e))?;
    Ok(cfg)
}

pub fn load_dataset_spec(path: &Path) -> Result<DatasetSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec: DatasetSpec = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
    spec.validate().map_err(CliError::from)?;
    Ok(spec)
}

/// Echo a fully-resolved config as one tagged, machine-parsable line.
pub fn echo_config<S: Serialize>(cfg: &S) {
    println!(
        "CONFIG {}",
        serde_json::to_string(cfg).expect("config serializes")
    );
}

/// The required final line of every successful run.
pub fn print_result<S: Serialize>(summary: &S) {
    println!(
        "RESULT {}",
        serde_json::to_string(summary).expect("summary serializes")
    );
}

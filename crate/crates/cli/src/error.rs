//! Error type shared by all subcommands, with the process exit-code policy:
//! 2 for usage/config/format problems, 3 for runtime numeric failures.

use std::path::PathBuf;

use pointfill::data::DataError;
use pointfill::geom::GeomError;
use pointfill::harness::HarnessError;
use pointfill::model::ModelError;
use pointfill::numerics::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 when a numeric computation went non-finite at runtime; 2 for
    /// everything else (bad flags, configs, files, shapes).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Harness(HarnessError::NonFiniteLoss { .. }) => 3,
            CliError::Harness(HarnessError::Model(ModelError::NonFinite(_))) => 3,
            CliError::Model(ModelError::NonFinite(_)) => 3,
            _ => 2,
        }
    }
}

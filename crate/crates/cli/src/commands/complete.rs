//! `complete`: run one partial cloud through a checkpointed model. The input
//! is normalized to the unit sphere for the network and the prediction is
//! mapped back to the original frame before writing.

use std::path::Path;

use serde::Serialize;

use pointfill::data::{load_xyz, save_ply, save_xyz};
use pointfill::geom::{denormalize, normalize_unit};
use pointfill::harness::load_model;

use crate::config::{echo_config, print_result};
use crate::error::CliError;

#[derive(Serialize)]
struct EchoConfig<'a> {
    ckpt: &'a Path,
    input: &'a Path,
    out: &'a Path,
    ply: bool,
    model: &'a pointfill::model::ModelConfig,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    points_in: usize,
    points_out: usize,
    out: &'a Path,
}

pub fn complete(ckpt: &Path, input: &Path, out: &Path, ply: bool) -> Result<(), CliError> {
    let (model, _) = load_model(ckpt)?;
    echo_config(&EchoConfig {
        ckpt,
        input,
        out,
        ply,
        model: model.config(),
    });

    let cloud = load_xyz(input)?;
    let (normalized, centroid, scale) = normalize_unit(&cloud)?;
    let result = model.complete(&normalized)?;
    let restored = denormalize(&result.complete, centroid, scale);

    save_xyz(&restored, out)?;
    if ply {
        save_ply(&restored, &out.with_extension("ply"))?;
    }

    print_result(&Summary {
        command: "complete",
        points_in: cloud.len(),
        points_out: restored.len(),
        out,
    });
    Ok(())
}

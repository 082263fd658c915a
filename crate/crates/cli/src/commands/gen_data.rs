//! `gen-data`: materialize a benchmark directory from a dataset spec.

use std::path::{Path, PathBuf};

use serde::Serialize;

use pointfill::data::DatasetSpec;

use crate::config::{echo_config, load_dataset_spec, print_result};
use crate::dataset;
use crate::error::CliError;

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    objects: usize,
    eval_samples: usize,
    out: &'a Path,
}

pub fn gen_data(
    out: &Path,
    spec_path: Option<&PathBuf>,
    synthetic: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut spec = match (spec_path, synthetic) {
        (Some(path), None) => load_dataset_spec(path)?,
        (None, Some(n)) => DatasetSpec {
            n_objects: n,
            ..DatasetSpec::desk(0)
        },
        // clap enforces exactly one of the two flags
        _ => unreachable!("--spec and --synthetic are mutually exclusive and one is required"),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    echo_config(&spec);

    let (objects, eval_samples) = dataset::generate(out, &spec)?;
    print_result(&Summary {
        command: "gen-data",
        objects,
        eval_samples,
        out,
    });
    Ok(())
}

//! On-disk benchmark layout shared by `gen-data`, `train`, and `eval`:
//!
//! ```text
//! <dir>/manifest.json                         split + generation spec
//! <dir>/objects/<id>.xyz                      normalized ground-truth clouds
//! <dir>/eval/<id>_vp<V>_<difficulty>.xyz      partial inputs, 8 viewpoints × 3 tiers
//! ```
//!
//! Generation is a pure function of the spec, so two runs with the same spec
//! produce byte-identical trees.

use std::fs;
use std::path::{Path, PathBuf};

use pointfill::data::{
    derive_seed, load_manifest, load_xyz, make_eval_sample, make_split, save_manifest, save_xyz,
    DataError, DatasetSpec, Difficulty, EvalSample, Manifest, Role, ShapeKind, Source,
};
use pointfill::geom::{downsample_random, normalize_unit, PointCloud};
use pointfill::harness::TrainSet;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const N_VIEWPOINTS: usize = 8;

pub fn object_rel_path(id: &str) -> String {
    format!("objects/{id}.xyz")
}

pub fn eval_rel_path(id: &str, viewpoint: usize, difficulty: Difficulty) -> String {
    format!("eval/{id}_vp{viewpoint}_{difficulty}.xyz")
}

/// Materialize a benchmark directory from a spec. Returns
/// `(object count, eval sample count)`.
pub fn generate(out: &Path, spec: &DatasetSpec) -> Result<(usize, usize), CliError> {
    spec.validate().map_err(CliError::from)?;
    let clouds = source_objects(spec)?;

    let listing: Vec<(String, String, String)> = clouds
        .iter()
        .map(|(id, category, _)| (id.clone(), category.clone(), object_rel_path(id)))
        .collect();
    let manifest = make_split(&listing, spec)?;

    fs::create_dir_all(out.join("objects")).map_err(|e| CliError::io(out, e))?;
    fs::create_dir_all(out.join("eval")).map_err(|e| CliError::io(out, e))?;
    save_manifest(&manifest, &out.join(MANIFEST_FILE))?;

    let mut eval_files = 0usize;
    for (id, category, cloud) in &clouds {
        save_xyz(cloud, &out.join(object_rel_path(id)))?;
        for viewpoint in 0..N_VIEWPOINTS {
            for difficulty in Difficulty::ALL {
                let sample = make_eval_sample(cloud, id, category, viewpoint, difficulty, spec)?;
                save_xyz(&sample.partial, &out.join(eval_rel_path(id, viewpoint, difficulty)))?;
                eval_files += 1;
            }
        }
    }
    Ok((clouds.len(), eval_files))
}

/// Ground-truth clouds per the spec's source: synthetic shapes cycling
/// through the five kinds, or normalized copies of a directory of XYZ files.
fn source_objects(spec: &DatasetSpec) -> Result<Vec<(String, String, PointCloud)>, CliError> {
    match &spec.source {
        Source::Synthetic => Ok((0..spec.n_objects)
            .map(|i| {
                let kind = ShapeKind::ALL[i % ShapeKind::ALL.len()];
                let category = kind.as_str().to_string();
                let id = format!("{category}_{i:04}");
                let cloud =
                    pointfill::data::synth_shape(kind, spec.gt_points, derive_seed(spec.seed, "object", i as u64));
                (id, category, cloud)
            })
            .collect()),
        Source::Directory(dir) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| CliError::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "xyz"))
                .collect();
            files.sort();
            let mut objects = Vec::with_capacity(files.len());
            for (i, path) in files.iter().enumerate() {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| CliError::Usage(format!("{}: unreadable file name", path.display())))?;
                let category = stem.rsplit_once('_').map_or(stem, |(cat, _)| cat).to_string();
                let raw = load_xyz(path)?;
                if raw.len() < spec.gt_points {
                    return Err(CliError::Data(DataError::BadSpec(format!(
                        "{}: {} points, need at least gt_points = {}",
                        path.display(),
                        raw.len(),
                        spec.gt_points
                    ))));
                }
                let sized =
                    downsample_random(&raw, spec.gt_points, derive_seed(spec.seed, "ingest", i as u64))?;
                let (cloud, _, _) = normalize_unit(&sized)?;
                objects.push((stem.to_string(), category, cloud));
            }
            Ok(objects)
        }
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    Ok(load_manifest(&dir.join(MANIFEST_FILE))?)
}

/// Training corpus: every train-role ground-truth cloud plus the crop spec.
pub fn load_train_set(dir: &Path) -> Result<TrainSet, CliError> {
    let manifest = read_manifest(dir)?;
    let mut objects = Vec::new();
    for entry in manifest.entries_with_role(Role::Train) {
        let cloud = load_xyz(&dir.join(&entry.source))?;
        objects.push((entry.id.clone(), cloud));
    }
    Ok(TrainSet {
        objects,
        spec: manifest.spec.clone(),
    })
}

/// The materialized evaluation grid for entries of `role` (or all entries
/// when `role` is `None`): partial inputs from `eval/`, ground truth from
/// `objects/`.
pub fn load_eval_samples(dir: &Path, role: Option<Role>) -> Result<Vec<EvalSample>, CliError> {
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::new();
    for entry in &manifest.entries {
        if role.is_some_and(|r| entry.role != r) {
            continue;
        }
        let gt = load_xyz(&dir.join(&entry.source))?;
        for viewpoint in 0..N_VIEWPOINTS {
            for difficulty in Difficulty::ALL {
                let partial = load_xyz(&dir.join(eval_rel_path(&entry.id, viewpoint, difficulty)))?;
                samples.push(EvalSample {
                    object_id: entry.id.clone(),
                    category: entry.category.clone(),
                    viewpoint_index: viewpoint,
                    difficulty,
                    partial,
                    gt: gt.clone(),
                });
            }
        }
    }
    Ok(samples)
}

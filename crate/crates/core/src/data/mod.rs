//! Benchmark construction: synthetic shape corpus, train/eval sample
//! generation with difficulty tiers, split manifests, and file formats.
//!
//! Generation is a pure function of `(spec, seed)`: two runs produce
//! byte-identical manifests and sample files.

mod io;
mod samplegen;
mod split;
mod synth;

pub use io::{load_manifest, load_ply, load_xyz, save_manifest, save_ply, save_xyz};
pub use samplegen::{derive_seed, make_eval_sample, make_train_sample, EvalSample};
pub use split::{make_split, Manifest, ManifestEntry, Role};
pub use synth::{synth_shape, ShapeKind};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::geom::GeomError;

/// Errors from dataset construction and file formats.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("dataset spec: {0}")]
    BadSpec(String),
    #[error("viewpoint index {0} out of range 0..8")]
    BadViewpoint(usize),
    #[error("category {0:?} needs at least 2 objects to split")]
    TinyCategory(String),
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
}

/// Where ground-truth objects come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Parametric surface corpus generated in-process.
    Synthetic,
    /// Directory of XYZ files, one object per file, category = file stem prefix.
    Directory(PathBuf),
}

/// Evaluation difficulty tier; fixes how many ground-truth points the crop
/// removes (25% / 50% / 75%).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Moderate, Difficulty::Hard];

    pub fn index(self) -> usize {
        match self {
            Difficulty::Simple => 0,
            Difficulty::Moderate => 1,
            Difficulty::Hard => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full description of a benchmark: object source and counts, crop ranges,
/// split policy, and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub source: Source,
    /// Number of synthetic objects (ignored for directory sources).
    pub n_objects: usize,
    pub gt_points: usize,
    pub input_points: usize,
    /// Inclusive range of removed-point counts for online training crops.
    pub n_range_train: [usize; 2],
    /// Removed-point count per difficulty tier: [simple, moderate, hard].
    pub eval_n: [usize; 3],
    /// Fraction of each category assigned to training.
    pub split_ratio: f64,
    /// Categories held out of training entirely (all objects become test).
    pub holdout_categories: Vec<String>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: Source::Synthetic,
            n_objects: 10,
            gt_points: 8192,
            input_points: 2048,
            n_range_train: [2048, 6144],
            eval_n: [2048, 4096, 6144],
            split_ratio: 0.8,
            holdout_categories: Vec::new(),
            seed: 0,
        }
    }
}

impl DatasetSpec {
    /// Small configuration for tests and CI: 512-point ground truth,
    /// 128-point inputs, crops scaled to the same 25–75% band.
    pub fn desk(seed: u64) -> Self {
        DatasetSpec {
            source: Source::Synthetic,
            n_objects: 10,
            gt_points: 512,
            input_points: 128,
            n_range_train: [128, 384],
            eval_n: [128, 256, 384],
            split_ratio: 0.8,
            holdout_categories: Vec::new(),
            seed,
        }
    }

    /// Removed-point count for a difficulty tier.
    pub fn eval_removed(&self, difficulty: Difficulty) -> usize {
        self.eval_n[difficulty.index()]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::BadSpec(msg));
        if self.gt_points < 2 {
            return bad(format!("gt_points must be at least 2, got {}", self.gt_points));
        }
        if self.input_points == 0 {
            return bad("input_points must be positive".into());
        }
        let [lo, hi] = self.n_range_train;
        if lo == 0 || lo > hi || hi >= self.gt_points {
            return bad(format!(
                "n_range_train {:?} must satisfy 0 < lo <= hi < gt_points ({})",
                self.n_range_train, self.gt_points
            ));
        }
        if self.eval_n.iter().any(|&n| n == 0 || n >= self.gt_points) {
            return bad(format!(
                "eval_n {:?} must lie strictly inside (0, gt_points)",
                self.eval_n
            ));
        }
        if self.input_points > self.gt_points - lo {
            return bad(format!(
                "input_points {} exceeds gt_points - min(n) = {}",
                self.input_points,
                self.gt_points - lo
            ));
        }
        if !(0.0 < self.split_ratio && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must be in (0, 1)", self.split_ratio));
        }
        if matches!(self.source, Source::Synthetic) && self.n_objects == 0 {
            return bad("synthetic source needs n_objects >= 1".into());
        }
        Ok(())
    }
}

//! Stratified train/test splits and the dataset manifest.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, DataError, DatasetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

/// One object in the dataset: identity, category, split role, and the
/// relative path of its ground-truth cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub role: Role,
    pub source: String,
}

/// The on-disk dataset description; serialization is deterministic, so
/// identical specs produce byte-identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub spec: DatasetSpec,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl Manifest {
    pub fn entries_with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }
}

/// Stratified split: per category, a seeded shuffle assigns
/// `round-down(ratio × n)` objects (clamped to leave at least one test
/// object) to training. Categories in `spec.holdout_categories` contribute
/// only test objects, mirroring the seen/unseen protocol.
pub fn make_split(
    objects: &[(String, String, String)], // (id, category, source path)
    spec: &DatasetSpec,
) -> Result<Manifest, DataError> {
    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, category, _)) in objects.iter().enumerate() {
        by_category.entry(category).or_default().push(i);
    }
    let mut roles = vec![Role::Test; objects.len()];
    for (category, members) in &by_category {
        if spec.holdout_categories.iter().any(|c| c == category) {
            continue; // all members stay Test
        }
        if members.len() < 2 {
            return Err(DataError::TinyCategory(category.to_string()));
        }
        let mut order = members.clone();
        let mut rng =
            ChaCha12Rng::seed_from_u64(derive_seed(spec.seed, "split", fnv_str(category)));
        for i in 0..order.len() {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        let n = order.len();
        let train_count = ((spec.split_ratio * n as f64).floor() as usize).clamp(1, n - 1);
        for &idx in &order[..train_count] {
            roles[idx] = Role::Train;
        }
    }
    let mut entries: Vec<ManifestEntry> = objects
        .iter()
        .enumerate()
        .map(|(i, (id, category, source))| ManifestEntry {
            id: id.clone(),
            category: category.clone(),
            role: roles[i],
            source: source.clone(),
        })
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Manifest {
        version: MANIFEST_VERSION,
        seed: spec.seed,
        spec: spec.clone(),
        entries,
    })
}

fn fnv_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in s.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

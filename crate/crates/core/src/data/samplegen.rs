//! Train/eval sample construction: viewpoint crops plus downsampling.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::geom::{crop_by_viewpoint, downsample_random, eval_viewpoints, PointCloud, Viewpoint};

use super::{DataError, DatasetSpec, Difficulty};

/// One benchmark evaluation instance: a deterministic partial view of an
/// object at a fixed viewpoint and difficulty.
#[derive(Clone, Debug)]
pub struct EvalSample {
    pub object_id: String,
    pub category: String,
    pub viewpoint_index: usize,
    pub difficulty: Difficulty,
    pub partial: PointCloud,
    pub gt: PointCloud,
}

/// FNV-1a over `(base, label, index)`; used everywhere a reproducible
/// sub-seed is derived from the master seed, so no RNG state ever needs to
/// be serialized.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        // length terminator separates adjacent fields
        h ^= bytes.len() as u64;
        h = h.wrapping_mul(PRIME);
    };
    eat(&base.to_le_bytes());
    eat(label.as_bytes());
    eat(&index.to_le_bytes());
    h
}

/// The random draws behind one training crop: a viewpoint uniform on the
/// sphere and a removal count uniform in `spec.n_range_train`.
pub(crate) fn draw_crop_params(spec: &DatasetSpec, rng: &mut ChaCha12Rng) -> (Viewpoint, usize) {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let vp = Viewpoint::new([(s * phi.cos()) as f32, (s * phi.sin()) as f32, z as f32])
        .expect("sphere direction is nonzero");
    let [lo, hi] = spec.n_range_train;
    (vp, rng.gen_range(lo..=hi))
}

/// Online training crop: a uniformly random viewpoint, a removal count
/// drawn from `spec.n_range_train`, then downsampling to
/// `spec.input_points`. The returned partial is a sub-multiset of `gt`.
pub fn make_train_sample(
    gt: &PointCloud,
    spec: &DatasetSpec,
    rng: &mut ChaCha12Rng,
) -> Result<PointCloud, DataError> {
    let (vp, n) = draw_crop_params(spec, rng);
    let (remaining, _) = crop_by_viewpoint(gt, &vp, n)?;
    let sample_seed: u64 = rng.gen();
    Ok(downsample_random(&remaining, spec.input_points, sample_seed)?)
}

/// Deterministic evaluation crop at one of the 8 fixed viewpoints. The
/// downsample seed derives from `(spec.seed, object id, viewpoint,
/// difficulty)`, so the same inputs always give a bit-identical sample.
pub fn make_eval_sample(
    gt: &PointCloud,
    object_id: &str,
    category: &str,
    viewpoint_index: usize,
    difficulty: Difficulty,
    spec: &DatasetSpec,
) -> Result<EvalSample, DataError> {
    let viewpoints = eval_viewpoints();
    let vp = viewpoints
        .get(viewpoint_index)
        .ok_or(DataError::BadViewpoint(viewpoint_index))?;
    let n = spec.eval_removed(difficulty);
    let (remaining, _) = crop_by_viewpoint(gt, vp, n)?;
    let label = format!("eval/{object_id}/vp{viewpoint_index}");
    let seed = derive_seed(spec.seed, &label, difficulty.index() as u64);
    let partial = downsample_random(&remaining, spec.input_points, seed)?;
    Ok(EvalSample {
        object_id: object_id.to_string(),
        category: category.to_string(),
        viewpoint_index,
        difficulty,
        partial,
        gt: gt.clone(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::data::synth::{synth_shape, ShapeKind};

    fn member_of(p: [f32; 3], cloud: &PointCloud) -> bool {
        cloud.iter().any(|q| q == p)
    }

    #[test]
    fn derive_seed_separates_fields() {
        assert_ne!(derive_seed(1, "ab", 0), derive_seed(1, "a", 0));
        assert_ne!(derive_seed(1, "x", 2), derive_seed(1, "x", 3));
        assert_ne!(derive_seed(1, "x", 2), derive_seed(2, "x", 2));
        assert_eq!(derive_seed(9, "step", 4), derive_seed(9, "step", 4));
    }

    #[test]
    fn train_sample_size_and_membership() {
        let spec = DatasetSpec::desk(0);
        let gt = synth_shape(ShapeKind::Sphere, spec.gt_points, 1);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..5 {
            let partial = make_train_sample(&gt, &spec, &mut rng).unwrap();
            assert_eq!(partial.len(), spec.input_points);
            for p in partial.iter() {
                assert!(member_of(p, &gt), "partial point not in gt");
            }
        }
    }

    #[test]
    fn train_removal_counts_approximately_uniform() {
        let spec = DatasetSpec::desk(0);
        let [lo, hi] = spec.n_range_train;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let buckets = 8usize;
        let width = (hi - lo + 1) as f64 / buckets as f64;
        let draws = 10_000usize;
        let mut counts = vec![0usize; buckets];
        for _ in 0..draws {
            let (_, n) = draw_crop_params(&spec, &mut rng);
            assert!((lo..=hi).contains(&n));
            let b = (((n - lo) as f64 / width) as usize).min(buckets - 1);
            counts[b] += 1;
        }
        // χ² against uniform; 14.07 is the 95% critical value for 7 dof —
        // generous slack to keep the test seed-stable
        let expected = draws as f64 / buckets as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 30.0, "χ² = {chi2}, counts {counts:?}");
    }

    #[test]
    fn eval_sample_is_deterministic() {
        let spec = DatasetSpec::desk(3);
        let gt = synth_shape(ShapeKind::Torus, spec.gt_points, 4);
        let a = make_eval_sample(&gt, "torus_0001", "torus", 2, Difficulty::Hard, &spec).unwrap();
        let b = make_eval_sample(&gt, "torus_0001", "torus", 2, Difficulty::Hard, &spec).unwrap();
        assert_eq!(a.partial, b.partial);
        let c = make_eval_sample(&gt, "torus_0001", "torus", 3, Difficulty::Hard, &spec).unwrap();
        assert_ne!(a.partial, c.partial, "viewpoint must matter");
    }

    #[test]
    fn eval_difficulty_mapping_holds() {
        let spec = DatasetSpec::desk(3);
        let gt = synth_shape(ShapeKind::Cylinder, spec.gt_points, 5);
        for difficulty in Difficulty::ALL {
            let s = make_eval_sample(&gt, "cyl_0", "cylinder", 0, difficulty, &spec).unwrap();
            assert_eq!(s.partial.len(), spec.input_points);
            assert_eq!(s.difficulty, difficulty);
            // hard removes gt - input exactly: remaining is a permutation
            if difficulty == Difficulty::Hard {
                let mut got: Vec<_> = s
                    .partial
                    .iter()
                    .map(|p| (p[0].to_bits(), p[1].to_bits(), p[2].to_bits()))
                    .collect();
                got.sort_unstable();
                got.dedup();
                assert_eq!(got.len(), spec.input_points, "hard tier must not duplicate");
            }
        }
    }

    #[test]
    fn eval_rejects_bad_viewpoint() {
        let spec = DatasetSpec::desk(0);
        let gt = synth_shape(ShapeKind::Sphere, spec.gt_points, 6);
        assert!(matches!(
            make_eval_sample(&gt, "s", "sphere", 8, Difficulty::Simple, &spec),
            Err(DataError::BadViewpoint(8))
        ));
    }
}

//! Point selection: farthest point sampling, k nearest neighbors, and
//! seeded random downsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{GeomError, PointCloud};

/// Row-major `rows×k` matrix of point indices, one row per query.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMatrix {
    rows: usize,
    k: usize,
    indices: Vec<usize>,
}

impl IndexMatrix {
    /// Build from explicit rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<usize>]) -> Self {
        let k = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == k), "ragged index rows");
        IndexMatrix {
            rows: rows.len(),
            k,
            indices: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn flat(&self) -> &[usize] {
        &self.indices
    }
}

fn dist_sq(a: [f32; 3], b: [f32; 3]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..3 {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s
}

/// Index of the lexicographically smallest point (x, then y, then z; ties by
/// lowest index). Used as the canonical FPS start so that selection does not
/// depend on input row order.
pub fn lexicographic_start(cloud: &PointCloud) -> usize {
    let mut best = 0usize;
    for i in 1..cloud.len() {
        if cloud.point(i) < cloud.point(best) {
            best = i;
        }
    }
    best
}

/// Farthest point sampling: greedy max-min selection of `k` indices starting
/// from `start_index`. Each pick maximizes the distance to the already
/// selected set; ties break toward the lowest index.
pub fn fps(cloud: &PointCloud, k: usize, start_index: usize) -> Result<Vec<usize>, GeomError> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(GeomError::Size {
            op: "fps",
            requested: k,
            available: n,
        });
    }
    if start_index >= n {
        return Err(GeomError::Size {
            op: "fps start",
            requested: start_index,
            available: n,
        });
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut latest = start_index;
    selected.push(start_index);
    for _ in 1..k {
        let latest_point = cloud.point(latest);
        let mut best = 0usize;
        let mut best_dist = f64::NEG_INFINITY;
        for i in 0..n {
            let d = dist_sq(cloud.point(i), latest_point);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best_dist {
                best_dist = min_dist[i];
                best = i;
            }
        }
        selected.push(best);
        latest = best;
    }
    Ok(selected)
}

/// For each query point, the indices of the `k` nearest keys, sorted
/// ascending by (distance, index). Distances are evaluated in f64 so results
/// match a brute-force f64 oracle exactly.
pub fn knn(queries: &PointCloud, keys: &PointCloud, k: usize) -> Result<IndexMatrix, GeomError> {
    let m = keys.len();
    if k == 0 || k > m {
        return Err(GeomError::Size {
            op: "knn",
            requested: k,
            available: m,
        });
    }
    let mut indices = Vec::with_capacity(queries.len() * k);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(m);
    for q in queries.iter() {
        scratch.clear();
        scratch.extend((0..m).map(|j| (dist_sq(q, keys.point(j)), j)));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        indices.extend(scratch[..k].iter().map(|&(_, j)| j));
    }
    Ok(IndexMatrix {
        rows: queries.len(),
        k,
        indices,
    })
}

/// `m` points drawn uniformly without replacement (a seeded partial shuffle);
/// when `m > len` the full permutation is padded with uniform re-draws.
pub fn downsample_random(cloud: &PointCloud, m: usize, seed: u64) -> Result<PointCloud, GeomError> {
    let n = cloud.len();
    if m == 0 {
        return Err(GeomError::Size {
            op: "downsample_random",
            requested: 0,
            available: n,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let take = m.min(n);
    for i in 0..take {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let mut picked: Vec<usize> = order[..take].to_vec();
    while picked.len() < m {
        picked.push(rng.gen_range(0..n));
    }
    Ok(cloud.select(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f32]) -> PointCloud {
        let pts: Vec<[f32; 3]> = xs.iter().map(|&x| [x, 0.0, 0.0]).collect();
        PointCloud::from_points(&pts).unwrap()
    }

    #[test]
    fn fps_line_picks_farthest() {
        // x in {0,1,3,4}, start 0: farthest from x=0 is x=4 (index 3)
        let cloud = line(&[0.0, 1.0, 3.0, 4.0]);
        assert_eq!(fps(&cloud, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn fps_k_equals_count_returns_everything() {
        let cloud = line(&[0.0, 1.0, 3.0, 4.0]);
        let mut picks = fps(&cloud, 4, 0).unwrap();
        let replay = fps(&cloud, 4, 0).unwrap();
        assert_eq!(picks, replay, "deterministic order");
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fps_rejects_bad_sizes() {
        let cloud = line(&[0.0, 1.0]);
        assert!(matches!(fps(&cloud, 3, 0), Err(GeomError::Size { .. })));
        assert!(matches!(fps(&cloud, 0, 0), Err(GeomError::Size { .. })));
        assert!(matches!(fps(&cloud, 1, 5), Err(GeomError::Size { .. })));
    }

    #[test]
    fn lexicographic_start_orders_by_xyz() {
        let cloud = PointCloud::from_points(&[
            [1.0, 0.0, 0.0],
            [0.0, 5.0, 0.0],
            [0.0, 1.0, 9.0],
            [0.0, 1.0, 2.0],
        ])
        .unwrap();
        assert_eq!(lexicographic_start(&cloud), 3);
    }

    #[test]
    fn knn_self_query_finds_itself() {
        let cloud = line(&[0.0, 2.0, 5.0]);
        let idx = knn(&cloud, &cloud, 1).unwrap();
        assert_eq!(idx.flat(), &[0, 1, 2]);
    }

    #[test]
    fn knn_origin_against_line() {
        let queries = PointCloud::from_points(&[[0.0, 0.0, 0.0]]).unwrap();
        let keys = line(&[1.0, 2.0, 3.0]);
        let idx = knn(&queries, &keys, 2).unwrap();
        assert_eq!(idx.row(0), &[0, 1]);
    }

    #[test]
    fn knn_ties_resolve_by_index() {
        let queries = PointCloud::from_points(&[[0.0, 0.0, 0.0]]).unwrap();
        let keys = PointCloud::from_points(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
            .unwrap();
        let idx = knn(&queries, &keys, 3).unwrap();
        assert_eq!(idx.row(0), &[0, 1, 2]);
    }

    #[test]
    fn knn_rejects_oversized_k() {
        let cloud = line(&[0.0, 1.0]);
        assert!(matches!(
            knn(&cloud, &cloud, 3),
            Err(GeomError::Size { .. })
        ));
    }

    #[test]
    fn downsample_exact_count_is_permutation() {
        let cloud = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let sampled = downsample_random(&cloud, 5, 99).unwrap();
        let mut xs: Vec<f32> = sampled.iter().map(|p| p[0]).collect();
        xs.sort_by(f32::total_cmp);
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn downsample_is_deterministic_and_seed_sensitive() {
        let cloud = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let a = downsample_random(&cloud, 3, 7).unwrap();
        let b = downsample_random(&cloud, 3, 7).unwrap();
        let c = downsample_random(&cloud, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn downsample_pads_when_oversampled() {
        let cloud = line(&[0.0, 1.0]);
        let sampled = downsample_random(&cloud, 5, 1).unwrap();
        assert_eq!(sampled.len(), 5);
        // every output point is a member of the input
        for p in sampled.iter() {
            assert!(p[0] == 0.0 || p[0] == 1.0);
        }
    }
}

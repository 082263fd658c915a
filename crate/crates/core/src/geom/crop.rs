//! Viewpoint cropping: the benchmark's partial-cloud construction.

use super::{GeomError, PointCloud, Viewpoint};

/// Remove the `n` points farthest from a viewpoint placed at
/// `vp.direction × 1.0` (the surface of the unit ball the cloud is
/// normalized into). Distance ranking alone decides removal; ties are
/// removed lowest-index first. Returns `(partial, removed)`, both in
/// original row order, partitioning the input.
pub fn crop_by_viewpoint(
    cloud: &PointCloud,
    vp: &Viewpoint,
    n: usize,
) -> Result<(PointCloud, PointCloud), GeomError> {
    let count = cloud.len();
    if n == 0 || n >= count {
        return Err(GeomError::Size {
            op: "crop_by_viewpoint",
            requested: n,
            available: count,
        });
    }
    let origin = vp.direction();
    let mut order: Vec<(f64, usize)> = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut sq = 0.0f64;
            for k in 0..3 {
                let d = p[k] as f64 - origin[k] as f64;
                sq += d * d;
            }
            (sq, i)
        })
        .collect();
    // farthest first; equal distances remove the lowest index first
    order.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut removed_idx: Vec<usize> = order[..n].iter().map(|&(_, i)| i).collect();
    removed_idx.sort_unstable();
    let mut is_removed = vec![false; count];
    for &i in &removed_idx {
        is_removed[i] = true;
    }
    let kept_idx: Vec<usize> = (0..count).filter(|&i| !is_removed[i]).collect();
    Ok((cloud.select(&kept_idx), cloud.select(&removed_idx)))
}

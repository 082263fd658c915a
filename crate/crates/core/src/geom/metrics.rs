//! Set distances between point clouds: Chamfer distance, F-Score, fidelity.
//!
//! The plain functions are f64 evaluation oracles. [`chamfer_graph`] is the
//! same Chamfer formula expressed in graph ops so it can serve as a training
//! loss with gradients.

use crate::numerics::{DistanceNorm, Graph, NumericsError, Scalar, Var};

use super::{GeomError, PointCloud};

fn point_dist(a: [f32; 3], b: [f32; 3], norm: DistanceNorm) -> f64 {
    let mut acc = 0.0f64;
    match norm {
        DistanceNorm::L1 => {
            for k in 0..3 {
                acc += (a[k] as f64 - b[k] as f64).abs();
            }
        }
        DistanceNorm::L2 | DistanceNorm::L2Squared => {
            for k in 0..3 {
                let d = a[k] as f64 - b[k] as f64;
                acc += d * d;
            }
            if matches!(norm, DistanceNorm::L2) {
                acc = acc.sqrt();
            }
        }
    }
    acc
}

fn nearest_dist(p: [f32; 3], cloud: &PointCloud, norm: DistanceNorm) -> f64 {
    cloud
        .iter()
        .map(|q| point_dist(p, q, norm))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Chamfer distance:
/// `(1/|P|) Σ_p min_g d(p,g) + (1/|G|) Σ_g min_p d(g,p)`.
pub fn chamfer(p: &PointCloud, g: &PointCloud, norm: DistanceNorm) -> f64 {
    let forward: f64 = p.iter().map(|pt| nearest_dist(pt, g, norm)).sum::<f64>() / p.len() as f64;
    let backward: f64 = g.iter().map(|pt| nearest_dist(pt, p, norm)).sum::<f64>() / g.len() as f64;
    forward + backward
}

/// Chamfer distance as a differentiable graph expression over `[n×3]`
/// tensors already entered in `graph`.
pub fn chamfer_graph<T: Scalar>(
    graph: &mut Graph<T>,
    p: Var,
    g: Var,
    norm: DistanceNorm,
) -> Result<Var, NumericsError> {
    let dists = graph.pairwise_dist(p, g, norm)?;
    let (fwd, _) = graph.min_over_axis(dists, 1)?;
    let fwd_mean = graph.mean_all(fwd);
    let (bwd, _) = graph.min_over_axis(dists, 0)?;
    let bwd_mean = graph.mean_all(bwd);
    graph.add(fwd_mean, bwd_mean)
}

/// F-Score at threshold `tau`: harmonic mean of precision (fraction of `p`
/// within `tau` of `g`) and recall (fraction of `g` within `tau` of `p`).
pub fn fscore(p: &PointCloud, g: &PointCloud, tau: f64) -> Result<f64, GeomError> {
    if !(tau > 0.0) {
        return Err(GeomError::BadThreshold { tau });
    }
    let close = |from: &PointCloud, to: &PointCloud| -> f64 {
        let hits = from
            .iter()
            .filter(|&pt| nearest_dist(pt, to, DistanceNorm::L2) <= tau)
            .count();
        hits as f64 / from.len() as f64
    };
    let precision = close(p, g);
    let recall = close(g, p);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// The "@1%" threshold: 1% of the largest per-axis extent of `gt`.
pub fn fscore_threshold(gt: &PointCloud) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in gt.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k] as f64);
            hi[k] = hi[k].max(p[k] as f64);
        }
    }
    (0..3).map(|k| hi[k] - lo[k]).fold(0.0f64, f64::max) * 0.01
}

/// Mean squared distance from each input point to its nearest output point.
/// Zero exactly when the output contains the input.
pub fn fidelity(input: &PointCloud, output: &PointCloud) -> f64 {
    input
        .iter()
        .map(|p| nearest_dist(p, output, DistanceNorm::L2Squared))
        .sum::<f64>()
        / input.len() as f64
}

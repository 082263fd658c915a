//! Folding head: expands each query feature into a small patch of points by
//! deforming a fixed 2-D grid in two MLP stages, then recentering on the
//! query coordinate.

use rand_chacha::ChaCha12Rng;

use super::params::{Mlp, ParamStore};
use super::{ModelConfig, ModelError};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Row-major `a×a` grid over `[-extent, extent]²` with `s = a²` entries.
pub fn fold_grid(points: usize, extent: f32) -> Vec<[f32; 2]> {
    let side = (points as f64).sqrt().round() as usize;
    assert_eq!(side * side, points, "fold grid needs a perfect square");
    let coord = |i: usize| {
        if side == 1 {
            0.0
        } else {
            -extent + 2.0 * extent * (i as f32) / (side as f32 - 1.0)
        }
    };
    let mut grid = Vec::with_capacity(points);
    for u in 0..side {
        for v in 0..side {
            grid.push([coord(u), coord(v)]);
        }
    }
    grid
}

#[derive(Clone, Debug)]
pub struct Folding {
    stage1: Mlp,
    stage2: Mlp,
    grid: Vec<[f32; 2]>,
}

impl Folding {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha12Rng) -> Self {
        let d = cfg.embed_dim;
        Folding {
            stage1: Mlp::new(store, "folding.stage1", &[d + 2, d, 3], rng),
            stage2: Mlp::new(store, "folding.stage2", &[d + 3, d, 3], rng),
            grid: fold_grid(cfg.fold_points_per_proxy, cfg.fold_grid_extent),
        }
    }

    /// `feats: [M, d]`, `coords: [M, 3]` → `[M·s, 3]` missing points, the
    /// `s` points of query `i` occupying rows `i·s .. (i+1)·s`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        feats: Var,
        coords: Var,
        cfg: &ModelConfig,
    ) -> Result<Var, ModelError> {
        let m = g.shape(feats)[0];
        let s = cfg.fold_points_per_proxy;

        let rep: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat(i).take(s)).collect();
        let feats_rep = g.gather_rows(feats, &rep)?;
        let coords_rep = g.gather_rows(coords, &rep)?;

        let mut grid_data = Vec::with_capacity(m * s * 2);
        for _ in 0..m {
            for uv in &self.grid {
                grid_data.push(T::from_f64(uv[0] as f64));
                grid_data.push(T::from_f64(uv[1] as f64));
            }
        }
        let grid = g.constant(Tensor::new(vec![m * s, 2], grid_data).expect("grid shape"));

        let in1 = g.concat_axis(&[feats_rep, grid], 1)?;
        let fold1 = self.stage1.forward(g, vars, in1)?;
        let in2 = g.concat_axis(&[feats_rep, fold1], 1)?;
        let fold2 = self.stage2.forward(g, vars, in2)?;
        Ok(g.add(fold2, coords_rep)?)
    }
}

//! Multi-head attention, edge convolution over a kNN graph, and the
//! geometry branch that augments attention blocks with local structure.

use rand_chacha::ChaCha12Rng;

use super::params::{Linear, ParamStore};
use crate::geom::IndexMatrix;
use crate::numerics::{Graph, NumericsError, Scalar, Var};

/// Multi-head scaled dot-product attention with packed `d×d` projections.
#[derive(Clone, Debug)]
pub struct Mha {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    n_heads: usize,
}

impl Mha {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        dim: usize,
        n_heads: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert_eq!(dim % n_heads, 0, "dim must divide into heads");
        Mha {
            wq: Linear::new(store, &format!("{path}.wq"), dim, dim, rng),
            wk: Linear::new(store, &format!("{path}.wk"), dim, dim, rng),
            wv: Linear::new(store, &format!("{path}.wv"), dim, dim, rng),
            wo: Linear::new(store, &format!("{path}.wo"), dim, dim, rng),
            n_heads,
        }
    }

    /// Attend from `queries` (`[n, d]`) over `keys_values` (`[m, d]`);
    /// self-attention passes the same `Var` for both.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        queries: Var,
        keys_values: Var,
    ) -> Result<Var, NumericsError> {
        let dim = g.shape(queries)[1];
        let head_dim = dim / self.n_heads;
        let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());

        let q = self.wq.forward(g, vars, queries)?;
        let k = self.wk.forward(g, vars, keys_values)?;
        let v = self.wv.forward(g, vars, keys_values)?;

        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let start = h * head_dim;
            let qh = g.slice_cols(q, start, head_dim)?;
            let kh = g.slice_cols(k, start, head_dim)?;
            let vh = g.slice_cols(v, start, head_dim)?;
            let kt = g.transpose2(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scaled = g.mul_scalar(scores, scale);
            let attn = g.softmax_axis(scaled, 1)?;
            heads.push(g.matmul(attn, vh)?);
        }
        let merged = g.concat_axis(&heads, 1)?;
        self.wo.forward(g, vars, merged)
    }
}

/// Shared-weight edge convolution: for each of `n` centers with `k`
/// neighbors, applies one linear + ReLU to `[f_center, f_neighbor - f_center]`
/// and max-pools over the neighbors.
#[derive(Clone, Debug)]
pub struct EdgeConv {
    pub lin: Linear,
    c_out: usize,
}

impl EdgeConv {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        EdgeConv {
            lin: Linear::new(store, path, 2 * c_in, c_out, rng),
            c_out,
        }
    }

    /// `center_feats: [n, c]`, `key_feats: [m, c]`, `neighbors` holds `n`
    /// rows of `k` indices into `key_feats`. Returns `[n, c_out]`. Self
    /// graphs pass the same `Var` for centers and keys.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        center_feats: Var,
        key_feats: Var,
        neighbors: &IndexMatrix,
    ) -> Result<Var, NumericsError> {
        let (n, k) = (neighbors.rows(), neighbors.k());
        let center_rep: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        let centers = g.gather_rows(center_feats, &center_rep)?;
        let nbrs = g.gather_rows(key_feats, neighbors.flat())?;
        let diff = g.sub(nbrs, centers)?;
        let edges = g.concat_axis(&[centers, diff], 1)?;
        let h = self.lin.forward(g, vars, edges)?;
        let h = g.relu(h);
        let h = g.reshape(h, vec![n, k, self.c_out])?;
        let (pooled, _) = g.max_over_axis(h, 1)?;
        Ok(pooled)
    }
}

/// Geometry branch bolted onto an attention sublayer: an edge convolution
/// over coordinate-space neighbors, fused with the attention output by a
/// linear projection of their concatenation.
#[derive(Clone, Debug)]
pub struct GeoBranch {
    pub conv: EdgeConv,
    pub fuse: Linear,
}

impl GeoBranch {
    pub fn new(store: &mut ParamStore, path: &str, dim: usize, rng: &mut ChaCha12Rng) -> Self {
        GeoBranch {
            conv: EdgeConv::new(store, &format!("{path}.conv"), dim, dim, rng),
            fuse: Linear::new(store, &format!("{path}.fuse"), 2 * dim, dim, rng),
        }
    }

    /// Combine `attn_out` (`[n, d]`) with edge-conv features of the same
    /// centers over `neighbors` into `key_feats`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        attn_out: Var,
        center_feats: Var,
        key_feats: Var,
        neighbors: &IndexMatrix,
    ) -> Result<Var, NumericsError> {
        let local = self.conv.forward(g, vars, center_feats, key_feats, neighbors)?;
        let both = g.concat_axis(&[attn_out, local], 1)?;
        self.fuse.forward(g, vars, both)
    }

    /// Learnable scalars added per geometry-aware block: used by the
    /// parameter-census identity.
    pub fn param_count(dim: usize) -> usize {
        // conv: [2d, d] + [d]; fuse: [2d, d] + [d]  =>  4d^2 + 2d
        4 * dim * dim + 2 * dim
    }
}

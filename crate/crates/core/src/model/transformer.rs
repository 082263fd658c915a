//! Pre-norm transformer blocks (optionally geometry-aware) and the dynamic
//! query generator that proposes missing-region centers from the encoder
//! memory.

use rand_chacha::ChaCha12Rng;

use super::attention::{GeoBranch, Mha};
use super::params::{LayerNormP, Linear, Mlp, ParamStore};
use super::{ModelConfig, ModelError};
use crate::geom::IndexMatrix;
use crate::numerics::{Graph, Scalar, Var};

/// Encoder block: pre-norm self-attention (optionally fused with an edge
/// convolution over proxy-coordinate neighbors) followed by a pre-norm FFN.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    ln_attn: LayerNormP,
    pub attn: Mha,
    pub geo: Option<GeoBranch>,
    ln_ffn: LayerNormP,
    ffn: Mlp,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cfg: &ModelConfig,
        geometry: bool,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let d = cfg.embed_dim;
        EncoderBlock {
            ln_attn: LayerNormP::new(store, &format!("{path}.ln_attn"), d),
            attn: Mha::new(store, &format!("{path}.attn"), d, cfg.n_heads, rng),
            geo: geometry.then(|| GeoBranch::new(store, &format!("{path}.geo"), d, rng)),
            ln_ffn: LayerNormP::new(store, &format!("{path}.ln_ffn"), d),
            ffn: Mlp::new(store, &format!("{path}.ffn"), &[d, cfg.ffn_hidden, d], rng),
        }
    }

    /// `x: [N, d]`; `neighbors` are coordinate-space kNN rows over the same
    /// `N` proxies, used only when the block is geometry-aware.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        x: Var,
        neighbors: &IndexMatrix,
        dropout: f64,
    ) -> Result<Var, ModelError> {
        let h = self.ln_attn.forward(g, vars, x)?;
        let sem = self.attn.forward(g, vars, h, h)?;
        let upd = match &self.geo {
            None => sem,
            Some(geo) => geo.forward(g, vars, sem, h, h, neighbors)?,
        };
        let upd = g.dropout(upd, dropout)?;
        let x = g.add(x, upd)?;

        let h = self.ln_ffn.forward(g, vars, x)?;
        let f = self.ffn.forward(g, vars, h)?;
        let f = g.dropout(f, dropout)?;
        Ok(g.add(x, f)?)
    }
}

/// Decoder block: pre-norm self-attention over the queries, cross-attention
/// into the encoder memory (optionally fused with an edge convolution from
/// query coordinates into proxy coordinates), then a pre-norm FFN.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    ln_self: LayerNormP,
    pub self_attn: Mha,
    ln_cross: LayerNormP,
    pub cross_attn: Mha,
    pub geo: Option<GeoBranch>,
    ln_ffn: LayerNormP,
    ffn: Mlp,
}

impl DecoderBlock {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cfg: &ModelConfig,
        geometry: bool,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let d = cfg.embed_dim;
        DecoderBlock {
            ln_self: LayerNormP::new(store, &format!("{path}.ln_self"), d),
            self_attn: Mha::new(store, &format!("{path}.self_attn"), d, cfg.n_heads, rng),
            ln_cross: LayerNormP::new(store, &format!("{path}.ln_cross"), d),
            cross_attn: Mha::new(store, &format!("{path}.cross_attn"), d, cfg.n_heads, rng),
            geo: geometry.then(|| GeoBranch::new(store, &format!("{path}.geo"), d, rng)),
            ln_ffn: LayerNormP::new(store, &format!("{path}.ln_ffn"), d),
            ffn: Mlp::new(store, &format!("{path}.ffn"), &[d, cfg.ffn_hidden, d], rng),
        }
    }

    /// `x: [M, d]` queries, `memory: [N, d]` encoder output;
    /// `cross_neighbors` holds, per query, its nearest proxies in
    /// coordinate space (used only when geometry-aware).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        x: Var,
        memory: Var,
        cross_neighbors: &IndexMatrix,
        dropout: f64,
    ) -> Result<Var, ModelError> {
        let h = self.ln_self.forward(g, vars, x)?;
        let s = self.self_attn.forward(g, vars, h, h)?;
        let s = g.dropout(s, dropout)?;
        let x = g.add(x, s)?;

        let h = self.ln_cross.forward(g, vars, x)?;
        let sem = self.cross_attn.forward(g, vars, h, memory)?;
        let upd = match &self.geo {
            None => sem,
            Some(geo) => geo.forward(g, vars, sem, h, memory, cross_neighbors)?,
        };
        let upd = g.dropout(upd, dropout)?;
        let x = g.add(x, upd)?;

        let h = self.ln_ffn.forward(g, vars, x)?;
        let f = self.ffn.forward(g, vars, h)?;
        let f = g.dropout(f, dropout)?;
        Ok(g.add(x, f)?)
    }
}

/// Dynamic query generator: max-pools a per-proxy summary into one global
/// feature, predicts `M` missing-region coordinates from it, and embeds each
/// `(global, coordinate)` pair as the decoder's initial query features.
#[derive(Clone, Debug)]
pub struct QueryGen {
    summary: Linear,
    coord_head: Linear,
    embed: Mlp,
}

impl QueryGen {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha12Rng) -> Self {
        let qh = cfg.query_hidden;
        QueryGen {
            summary: Linear::new(store, "querygen.summary", cfg.embed_dim, qh, rng),
            coord_head: Linear::new(store, "querygen.coords", qh, 3 * cfg.n_queries, rng),
            embed: Mlp::new(
                store,
                "querygen.embed",
                &[qh + 3, qh, cfg.embed_dim],
                rng,
            ),
        }
    }

    /// `memory: [N, d]` → (`coords: [M, 3]`, `embeds: [M, d]`).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        memory: Var,
        cfg: &ModelConfig,
    ) -> Result<(Var, Var), ModelError> {
        let m = cfg.n_queries;
        let s = self.summary.forward(g, vars, memory)?;
        let (pooled, _) = g.max_over_axis(s, 0)?;
        let pooled = g.reshape(pooled, vec![1, cfg.query_hidden])?;
        let flat = self.coord_head.forward(g, vars, pooled)?;
        let coords = g.reshape(flat, vec![m, 3])?;
        let rep = g.gather_rows(pooled, &vec![0; m])?;
        let joined = g.concat_axis(&[rep, coords], 1)?;
        let embeds = self.embed.forward(g, vars, joined)?;
        Ok((coords, embeds))
    }
}

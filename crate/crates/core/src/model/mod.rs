//! The completion network: proxy extraction, geometry-aware transformer
//! encoder/decoder, dynamic query generation, and the folding head.
//!
//! Parameters live in a [`ParamStore`] on the host; every forward pass binds
//! them into a fresh [`crate::numerics::Graph`], so inference over a frozen
//! model is safe from multiple threads while training mutates the store
//! exclusively.

mod attention;
mod extractor;
mod folding;
mod network;
mod params;
mod transformer;

pub use attention::{EdgeConv, GeoBranch, Mha};
pub use extractor::Extractor;
pub use folding::Folding;
pub use network::{loss_terms, CompletionModel, CompletionResult, ForwardPass, LossVars};
pub use params::{bind, GradBuffer, LayerNormP, Linear, Mlp, ParamId, ParamStore};
pub use transformer::{DecoderBlock, EncoderBlock, QueryGen};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::GeomError;
use crate::numerics::{NumericsError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("input cloud has {actual} points, need at least {needed}")]
    InputTooSmall { needed: usize, actual: usize },
    #[error("parameter {name}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParam(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

/// Where geometry-aware blocks replace vanilla attention blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Plain attention everywhere (the ablation baseline).
    None,
    /// First encoder block and first decoder block.
    First,
    /// Every block.
    All,
}

impl Placement {
    fn as_code(self) -> f32 {
        match self {
            Placement::None => 0.0,
            Placement::First => 1.0,
            Placement::All => 2.0,
        }
    }

    fn from_code(v: f32) -> Result<Self, ModelError> {
        match v as i64 {
            0 => Ok(Placement::None),
            1 => Ok(Placement::First),
            2 => Ok(Placement::All),
            other => Err(ModelError::BadConfig(format!(
                "unknown placement code {other}"
            ))),
        }
    }

    /// Is block `i` geometry-aware under this placement?
    pub fn applies(self, block_index: usize) -> bool {
        match self {
            Placement::None => false,
            Placement::First => block_index == 0,
            Placement::All => true,
        }
    }
}

/// Architecture hyperparameters. `Default` is the ShapeNet-55 scale; see
/// [`ModelConfig::pcn`] and [`ModelConfig::desk`] for the other presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// N: number of point proxies from the extractor.
    pub n_proxies: usize,
    /// M: number of predicted missing-region queries.
    pub n_queries: usize,
    /// d: transformer width.
    pub embed_dim: usize,
    pub n_heads: usize,
    pub enc_depth: usize,
    pub dec_depth: usize,
    /// k for the extractor's edge convolutions.
    pub k_dgcnn: usize,
    /// k for the geometry branch inside attention blocks.
    pub k_geo: usize,
    /// s: folded points per query; must be a perfect square.
    pub fold_points_per_proxy: usize,
    pub geometry_block_placement: Placement,
    /// Width of the pooled global summary in the query generator.
    pub query_hidden: usize,
    /// Hidden width of each block's feed-forward sublayer.
    pub ffn_hidden: usize,
    /// Half-extent of the fixed folding grid.
    pub fold_grid_extent: f32,
    /// Dropout probability after attention and FFN sublayers.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_proxies: 128,
            n_queries: 96,
            embed_dim: 384,
            n_heads: 6,
            enc_depth: 6,
            dec_depth: 8,
            k_dgcnn: 16,
            k_geo: 8,
            fold_points_per_proxy: 64,
            geometry_block_placement: Placement::First,
            query_hidden: 1024,
            ffn_hidden: 768,
            fold_grid_extent: 0.05,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    /// ShapeNet-55 scale: 2048-point inputs, 6144 missing points.
    pub fn shapenet55() -> Self {
        ModelConfig::default()
    }

    /// PCN scale: 224 queries for 14336 missing points.
    pub fn pcn() -> Self {
        ModelConfig {
            n_queries: 224,
            ..ModelConfig::default()
        }
    }

    /// Small configuration for tests and CI: 128-point inputs, 384 missing
    /// points (24 queries × 16 folded points).
    pub fn desk() -> Self {
        ModelConfig {
            n_proxies: 32,
            n_queries: 24,
            embed_dim: 96,
            n_heads: 6,
            enc_depth: 2,
            dec_depth: 2,
            k_dgcnn: 16,
            k_geo: 8,
            fold_points_per_proxy: 16,
            geometry_block_placement: Placement::First,
            query_hidden: 256,
            ffn_hidden: 192,
            fold_grid_extent: 0.05,
            dropout: 0.0,
        }
    }

    /// Total predicted missing points, `M × s`.
    pub fn missing_points(&self) -> usize {
        self.n_queries * self.fold_points_per_proxy
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        for (name, v) in [
            ("n_proxies", self.n_proxies),
            ("n_queries", self.n_queries),
            ("embed_dim", self.embed_dim),
            ("n_heads", self.n_heads),
            ("enc_depth", self.enc_depth),
            ("dec_depth", self.dec_depth),
            ("k_dgcnn", self.k_dgcnn),
            ("k_geo", self.k_geo),
            ("fold_points_per_proxy", self.fold_points_per_proxy),
            ("query_hidden", self.query_hidden),
            ("ffn_hidden", self.ffn_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.embed_dim % self.n_heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        let side = (self.fold_points_per_proxy as f64).sqrt().round() as usize;
        if side * side != self.fold_points_per_proxy {
            return bad(format!(
                "fold_points_per_proxy {} is not a perfect square",
                self.fold_points_per_proxy
            ));
        }
        if self.k_geo > self.n_proxies {
            return bad(format!(
                "k_geo {} exceeds n_proxies {}",
                self.k_geo, self.n_proxies
            ));
        }
        if !(self.fold_grid_extent > 0.0 && self.fold_grid_extent.is_finite()) {
            return bad(format!(
                "fold_grid_extent {} must be positive",
                self.fold_grid_extent
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Scalar-tensor encoding for embedding the config in checkpoints.
    pub fn to_tensors(&self) -> BTreeMap<String, Tensor<f32>> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: f32| {
            m.insert(format!("config.{k}"), Tensor::scalar(v));
        };
        put("n_proxies", self.n_proxies as f32);
        put("n_queries", self.n_queries as f32);
        put("embed_dim", self.embed_dim as f32);
        put("n_heads", self.n_heads as f32);
        put("enc_depth", self.enc_depth as f32);
        put("dec_depth", self.dec_depth as f32);
        put("k_dgcnn", self.k_dgcnn as f32);
        put("k_geo", self.k_geo as f32);
        put("fold_points_per_proxy", self.fold_points_per_proxy as f32);
        put("placement", self.geometry_block_placement.as_code());
        put("query_hidden", self.query_hidden as f32);
        put("ffn_hidden", self.ffn_hidden as f32);
        put("fold_grid_extent", self.fold_grid_extent);
        put("dropout", self.dropout as f32);
        m
    }

    pub fn from_tensors(map: &BTreeMap<String, Tensor<f32>>) -> Result<Self, ModelError> {
        let get = |k: &str| -> Result<f32, ModelError> {
            map.get(&format!("config.{k}"))
                .map(|t| t.item())
                .ok_or_else(|| ModelError::MissingParam(format!("config.{k}")))
        };
        let cfg = ModelConfig {
            n_proxies: get("n_proxies")? as usize,
            n_queries: get("n_queries")? as usize,
            embed_dim: get("embed_dim")? as usize,
            n_heads: get("n_heads")? as usize,
            enc_depth: get("enc_depth")? as usize,
            dec_depth: get("dec_depth")? as usize,
            k_dgcnn: get("k_dgcnn")? as usize,
            k_geo: get("k_geo")? as usize,
            fold_points_per_proxy: get("fold_points_per_proxy")? as usize,
            geometry_block_placement: Placement::from_code(get("placement")?)?,
            query_hidden: get("query_hidden")? as usize,
            ffn_hidden: get("ffn_hidden")? as usize,
            fold_grid_extent: get("fold_grid_extent")?,
            dropout: get("dropout")? as f64,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_carry_benchmark_arithmetic() {
        for cfg in [ModelConfig::shapenet55(), ModelConfig::pcn(), ModelConfig::desk()] {
            cfg.validate().unwrap();
        }
        assert_eq!(ModelConfig::shapenet55().missing_points(), 6144);
        assert_eq!(ModelConfig::pcn().missing_points(), 14336);
        assert_eq!(ModelConfig::desk().missing_points(), 384);
    }

    #[test]
    fn validation_rejects_bad_combinations() {
        let mut cfg = ModelConfig::desk();
        cfg.n_heads = 5; // 96 % 5 != 0
        assert!(cfg.validate().is_err());
        cfg = ModelConfig::desk();
        cfg.fold_points_per_proxy = 15;
        assert!(cfg.validate().is_err());
        cfg = ModelConfig::desk();
        cfg.k_geo = 64;
        assert!(cfg.validate().is_err());
        cfg = ModelConfig::desk();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_tensors() {
        for cfg in [ModelConfig::shapenet55(), ModelConfig::pcn(), ModelConfig::desk()] {
            let map = cfg.to_tensors();
            let back = ModelConfig::from_tensors(&map).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let json = serde_json::to_string(&ModelConfig::desk()).unwrap();
        let bad = json.replace("\"n_heads\":6", "\"n_heads\":6,\"depth\":4");
        assert!(serde_json::from_str::<ModelConfig>(&bad).is_err());
    }
}

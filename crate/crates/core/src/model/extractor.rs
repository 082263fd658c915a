//! Proxy extractor: a four-stage edge-convolution pyramid that downsamples
//! the partial cloud to `n_proxies` centers and embeds each one, adding a
//! coordinate encoding so every proxy knows where it sits.

use rand_chacha::ChaCha12Rng;

use super::params::{Linear, Mlp, ParamStore};
use super::{ModelConfig, ModelError};
use crate::geom::{fps, knn, lexicographic_start, PointCloud};
use crate::numerics::{Graph, Scalar, Var};

/// Feature widths of the input embedding and the four edge-conv stages.
const STAGE_CHANNELS: [(usize, usize); 4] = [(8, 32), (32, 64), (64, 64), (64, 128)];
const INPUT_EMBED: usize = 8;
const FINAL_CHANNELS: usize = 128;
const COORD_HIDDEN: usize = 128;

#[derive(Clone, Debug)]
pub struct Extractor {
    input_lin: Linear,
    stages: Vec<super::EdgeConv>,
    bridge: Linear,
    coord_embed: Mlp,
}

/// Center counts per stage for an `n`-point input: keep every point, twice
/// downsample to a quarter (but never below the proxy count), then to the
/// proxy count itself.
pub fn stage_sizes(n: usize, n_proxies: usize) -> [usize; 4] {
    let quarter = n_proxies.max(n / 4);
    [n, quarter, quarter, n_proxies]
}

impl Extractor {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha12Rng) -> Self {
        let input_lin = Linear::new(store, "extractor.input", 3, INPUT_EMBED, rng);
        let stages = STAGE_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &(c_in, c_out))| {
                super::EdgeConv::new(store, &format!("extractor.stage{i}"), c_in, c_out, rng)
            })
            .collect();
        let bridge = Linear::new(store, "extractor.bridge", FINAL_CHANNELS, cfg.embed_dim, rng);
        let coord_embed = Mlp::new(
            store,
            "extractor.coord",
            &[3, COORD_HIDDEN, cfg.embed_dim],
            rng,
        );
        Extractor {
            input_lin,
            stages,
            bridge,
            coord_embed,
        }
    }

    /// Reduce `partial` to proxy centers with `[N, d]` features. The center
    /// selection runs on the host (it is piecewise constant in the inputs);
    /// gradients flow through the gathered features.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        partial: &PointCloud,
        cfg: &ModelConfig,
    ) -> Result<(PointCloud, Var), ModelError> {
        let n = partial.len();
        if n < cfg.n_proxies {
            return Err(ModelError::InputTooSmall {
                needed: cfg.n_proxies,
                actual: n,
            });
        }
        let sizes = stage_sizes(n, cfg.n_proxies);
        if let Some(&smallest) = sizes.iter().min() {
            if cfg.k_dgcnn > smallest {
                return Err(ModelError::InputTooSmall {
                    needed: cfg.k_dgcnn,
                    actual: smallest,
                });
            }
        }

        let coords = g.constant(partial.tensor().cast::<T>());
        let mut feats = self.input_lin.forward(g, vars, coords)?;
        let mut cloud = partial.clone();

        for (conv, &n_out) in self.stages.iter().zip(sizes.iter()) {
            let centers_idx: Vec<usize> = if n_out == cloud.len() {
                (0..cloud.len()).collect()
            } else {
                fps(&cloud, n_out, lexicographic_start(&cloud))?
            };
            let center_cloud = cloud.select(&centers_idx);
            let neighbors = knn(&center_cloud, &cloud, cfg.k_dgcnn)?;
            let center_feats = g.gather_rows(feats, &centers_idx)?;
            feats = conv.forward(g, vars, center_feats, feats, &neighbors)?;
            cloud = center_cloud;
        }

        let projected = self.bridge.forward(g, vars, feats)?;
        let center_coords = g.constant(cloud.tensor().cast::<T>());
        let positional = self.coord_embed.forward(g, vars, center_coords)?;
        let out = g.add(projected, positional)?;
        Ok((cloud, out))
    }
}

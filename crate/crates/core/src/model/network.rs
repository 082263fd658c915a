//! The assembled completion network: extractor → encoder → query generator →
//! decoder → folding, plus the two-term training loss.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::extractor::Extractor;
use super::folding::Folding;
use super::params::{bind, ParamStore};
use super::transformer::{DecoderBlock, EncoderBlock, QueryGen};
use super::{GeoBranch, ModelConfig, ModelError};
use crate::geom::{chamfer_graph, knn, PointCloud};
use crate::numerics::{DistanceNorm, Graph, Scalar, Var};

/// Graph handles produced by one forward pass.
pub struct ForwardPass {
    /// Bindings for every parameter, indexed by `ParamId::index`.
    pub vars: Vec<Var>,
    /// The `N` extractor centers (host side).
    pub proxy_centers: PointCloud,
    /// Predicted missing-region centers, `[M, 3]`.
    pub query_coords: Var,
    /// Coarse prediction: query centers then proxy centers, `[M+N, 3]`.
    pub coarse: Var,
    /// Folded missing points, `[M·s, 3]`.
    pub missing: Var,
    /// Input points verbatim followed by the missing points,
    /// `[n_in + M·s, 3]`.
    pub complete: Var,
}

/// Host-side clouds from an inference pass.
#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub coarse: PointCloud,
    pub missing: PointCloud,
    pub complete: PointCloud,
}

/// The `J0` (coarse) and `J1` (dense) loss terms and their sum.
pub struct LossVars {
    pub j0: Var,
    pub j1: Var,
    pub j: Var,
}

pub struct CompletionModel {
    cfg: ModelConfig,
    store: ParamStore,
    extractor: Extractor,
    encoder: Vec<EncoderBlock>,
    querygen: QueryGen,
    decoder: Vec<DecoderBlock>,
    folding: Folding,
}

impl CompletionModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let placement = cfg.geometry_block_placement;

        let extractor = Extractor::new(&mut store, &cfg, &mut rng);
        let encoder = (0..cfg.enc_depth)
            .map(|i| {
                EncoderBlock::new(
                    &mut store,
                    &format!("encoder.block{i}"),
                    &cfg,
                    placement.applies(i),
                    &mut rng,
                )
            })
            .collect();
        let querygen = QueryGen::new(&mut store, &cfg, &mut rng);
        let decoder = (0..cfg.dec_depth)
            .map(|i| {
                DecoderBlock::new(
                    &mut store,
                    &format!("decoder.block{i}"),
                    &cfg,
                    placement.applies(i),
                    &mut rng,
                )
            })
            .collect();
        let folding = Folding::new(&mut store, &cfg, &mut rng);

        Ok(CompletionModel {
            cfg,
            store,
            extractor,
            encoder,
            querygen,
            decoder,
            folding,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Total learnable scalars.
    pub fn param_scalars(&self) -> usize {
        self.store.total_scalars()
    }

    /// How many blocks are geometry-aware under the current placement.
    pub fn geometry_block_count(&self) -> usize {
        self.encoder.iter().filter(|b| b.geo.is_some()).count()
            + self.decoder.iter().filter(|b| b.geo.is_some()).count()
    }

    /// Scalars attributable to geometry branches: the census identity
    /// `blocks × (4d² + 2d)`.
    pub fn geometry_param_scalars(&self) -> usize {
        self.geometry_block_count() * GeoBranch::param_count(self.cfg.embed_dim)
    }

    /// Run the network on `partial`, recording the computation in `g`.
    /// Center selection and neighbor search happen on the host; everything
    /// that carries gradients stays in the graph.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        partial: &PointCloud,
        trainable: bool,
    ) -> Result<ForwardPass, ModelError> {
        let cfg = &self.cfg;
        let vars = bind(&self.store, g, trainable);
        let p = cfg.dropout;

        let (centers, mut memory) = self.extractor.forward(g, &vars, partial, cfg)?;
        let enc_neighbors = knn(&centers, &centers, cfg.k_geo)?;
        for block in &self.encoder {
            memory = block.forward(g, &vars, memory, &enc_neighbors, p)?;
        }

        let (query_coords, query_embeds) = self.querygen.forward(g, &vars, memory, cfg)?;
        let predicted = g.value(query_coords).cast::<f32>();
        let query_cloud = PointCloud::new(predicted)
            .map_err(|_| ModelError::NonFinite("predicted query coordinates"))?;
        let cross_neighbors = knn(&query_cloud, &centers, cfg.k_geo)?;

        let mut h = query_embeds;
        for block in &self.decoder {
            h = block.forward(g, &vars, h, memory, &cross_neighbors, p)?;
        }

        let missing = self.folding.forward(g, &vars, h, query_coords, cfg)?;

        let center_const = g.constant(centers.tensor().cast::<T>());
        let coarse = g.concat_axis(&[query_coords, center_const], 0)?;
        let partial_const = g.constant(partial.tensor().cast::<T>());
        let complete = g.concat_axis(&[partial_const, missing], 0)?;

        Ok(ForwardPass {
            vars,
            proxy_centers: centers,
            query_coords,
            coarse,
            missing,
            complete,
        })
    }

    /// Inference convenience: forward on a throwaway graph, returning clouds.
    pub fn complete(&self, partial: &PointCloud) -> Result<CompletionResult, ModelError> {
        let mut g = Graph::<f32>::inference();
        let fwd = self.forward(&mut g, partial, false)?;
        let cloud = |v: Var| -> Result<PointCloud, ModelError> {
            PointCloud::new(g.value(v).clone()).map_err(ModelError::Geom)
        };
        Ok(CompletionResult {
            coarse: cloud(fwd.coarse)?,
            missing: cloud(fwd.missing)?,
            complete: cloud(fwd.complete)?,
        })
    }
}

/// Build `J = J0 + J1`: chamfer of the coarse cloud against the target plus
/// chamfer of the dense completion against the target.
pub fn loss_terms<T: Scalar>(
    g: &mut Graph<T>,
    fwd: &ForwardPass,
    target: &PointCloud,
    norm: DistanceNorm,
) -> Result<LossVars, ModelError> {
    let gt = g.constant(target.tensor().cast::<T>());
    let j0 = chamfer_graph(g, fwd.coarse, gt, norm)?;
    let j1 = chamfer_graph(g, fwd.complete, gt, norm)?;
    let j = g.add(j0, j1)?;
    Ok(LossVars { j0, j1, j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::fidelity;
    use crate::model::Placement;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let pts: Vec<[f32; 3]> = (0..n)
            .map(|_| {
                [
                    rng.gen::<f32>() * 2.0 - 1.0,
                    rng.gen::<f32>() * 2.0 - 1.0,
                    rng.gen::<f32>() * 2.0 - 1.0,
                ]
            })
            .collect();
        PointCloud::from_points(&pts).unwrap()
    }

    #[test]
    fn desk_forward_has_documented_shapes() {
        let cfg = ModelConfig::desk();
        let model = CompletionModel::new(cfg, 0).unwrap();
        let partial = random_cloud(128, 1);

        let mut g = Graph::<f32>::inference();
        let fwd = model.forward(&mut g, &partial, false).unwrap();
        assert_eq!(fwd.proxy_centers.len(), 32);
        assert_eq!(g.shape(fwd.query_coords), &[24, 3]);
        assert_eq!(g.shape(fwd.coarse), &[56, 3]);
        assert_eq!(g.shape(fwd.missing), &[384, 3]);
        assert_eq!(g.shape(fwd.complete), &[512, 3]);
    }

    #[test]
    fn complete_cloud_preserves_the_input_verbatim() {
        let model = CompletionModel::new(ModelConfig::desk(), 3).unwrap();
        let partial = random_cloud(140, 2);
        let out = model.complete(&partial).unwrap();
        // Rows 0..n of the completion are the input, bit for bit, so the
        // fidelity of the input against the completion is exactly zero.
        for (i, p) in partial.iter().enumerate() {
            assert_eq!(out.complete.point(i), p);
        }
        assert_eq!(fidelity(&partial, &out.complete), 0.0);
        assert_eq!(out.complete.len(), 140 + 384);
        assert_eq!(out.missing.len(), 384);
        assert_eq!(out.coarse.len(), 56);
    }

    #[test]
    fn zeroed_model_folds_everything_to_the_origin() {
        let mut model = CompletionModel::new(ModelConfig::desk(), 4).unwrap();
        model.params_mut().zero_all();
        let partial = random_cloud(128, 5);
        let out = model.complete(&partial).unwrap();
        // Query coordinates become zero and the folding head adds nothing,
        // so every predicted missing point sits exactly at the origin.
        for p in out.missing.iter() {
            assert_eq!(p, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn loss_is_finite_and_reaches_every_parameter() {
        let model = CompletionModel::new(ModelConfig::desk(), 6).unwrap();
        let partial = random_cloud(128, 7);
        let target = random_cloud(256, 8);

        let mut g = Graph::<f32>::new(true, 0);
        let fwd = model.forward(&mut g, &partial, true).unwrap();
        let loss = loss_terms(&mut g, &fwd, &target, DistanceNorm::L2Squared).unwrap();
        let j0 = g.value(loss.j0).item();
        let j1 = g.value(loss.j1).item();
        let j = g.value(loss.j).item();
        assert!(j0.is_finite() && j1.is_finite());
        assert!((j - (j0 + j1)).abs() <= 1e-6 * j.abs());

        g.backward(loss.j).unwrap();
        for (var, id) in fwd.vars.iter().zip(model.params().ids()) {
            let grad = g.grad(*var);
            assert!(
                grad.is_some(),
                "no gradient for {}",
                model.params().name_of(id)
            );
            assert!(grad.unwrap().is_finite());
        }
    }

    #[test]
    fn input_permutation_leaves_predictions_unchanged() {
        let model = CompletionModel::new(ModelConfig::desk(), 9).unwrap();
        let partial = random_cloud(128, 10);
        let mut perm: Vec<usize> = (0..partial.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = partial.select(&perm);

        let a = model.complete(&partial).unwrap();
        let b = model.complete(&shuffled).unwrap();
        assert_eq!(a.missing.tensor().data(), b.missing.tensor().data());
        assert_eq!(a.coarse.tensor().data(), b.coarse.tensor().data());
    }

    #[test]
    fn geometry_placement_census_identity() {
        let unit = GeoBranch::param_count(ModelConfig::desk().embed_dim);
        let scalars = |placement: Placement| {
            let cfg = ModelConfig {
                geometry_block_placement: placement,
                ..ModelConfig::desk()
            };
            CompletionModel::new(cfg, 0).unwrap().param_scalars()
        };
        let none = scalars(Placement::None);
        assert_eq!(scalars(Placement::First) - none, 2 * unit);
        assert_eq!(scalars(Placement::All) - none, 4 * unit);

        let model = CompletionModel::new(ModelConfig::desk(), 0).unwrap();
        assert_eq!(model.geometry_block_count(), 2);
        assert_eq!(model.geometry_param_scalars(), 2 * unit);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = CompletionModel::new(ModelConfig::desk(), 42).unwrap();
        let b = CompletionModel::new(ModelConfig::desk(), 42).unwrap();
        let c = CompletionModel::new(ModelConfig::desk(), 43).unwrap();
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let differs = a
            .params()
            .iter()
            .zip(c.params().iter())
            .any(|((_, ta), (_, tc))| ta.data() != tc.data());
        assert!(differs);
    }

    #[test]
    fn forward_works_in_f64_for_gradient_checking() {
        let model = CompletionModel::new(ModelConfig::desk(), 12).unwrap();
        let partial = random_cloud(128, 13);
        let target = random_cloud(200, 14);
        let mut g = Graph::<f64>::new(true, 0);
        let fwd = model.forward(&mut g, &partial, true).unwrap();
        let loss = loss_terms(&mut g, &fwd, &target, DistanceNorm::L2).unwrap();
        assert!(g.value(loss.j).item().is_finite());
        g.backward(loss.j).unwrap();
    }
}

//! Host-side parameter storage, graph binding, and the small layer types
//! (linear, MLP, layer norm) that everything else composes.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha12Rng;

use super::ModelError;
use crate::numerics::{Graph, NumericsError, Scalar, Tensor, Var};

/// Handle to one named tensor in a [`ParamStore`]. Doubles as the index into
/// the per-pass binding produced by [`bind`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat collection of named parameters in creation order. Names are
/// hierarchical (`"encoder.block0.attn.wq.w"`) and unique.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor<f32>>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<f32>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id.0);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn total_scalars(&self) -> usize {
        self.values.iter().map(|t| t.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<f32> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<f32> {
        &mut self.values[id.0]
    }

    pub fn name_of(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Name-keyed copy of every tensor, for checkpointing.
    pub fn to_map(&self) -> BTreeMap<String, Tensor<f32>> {
        self.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    /// Replace every parameter with its entry in `map`. Missing names and
    /// shape mismatches are errors; extra keys in `map` are ignored so that
    /// checkpoints can carry optimizer and config tensors alongside weights.
    pub fn load_map(&mut self, map: &BTreeMap<String, Tensor<f32>>) -> Result<(), ModelError> {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let incoming = map
                .get(name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if incoming.shape() != value.shape() {
                return Err(ModelError::ShapeMismatch {
                    name: name.clone(),
                    expected: value.shape().to_vec(),
                    actual: incoming.shape().to_vec(),
                });
            }
            *value = incoming.clone();
        }
        Ok(())
    }

    /// Overwrite every tensor with zeros (used by invariant tests).
    pub fn zero_all(&mut self) {
        for v in &mut self.values {
            *v = Tensor::zeros(v.shape().to_vec());
        }
    }
}

/// Enter every parameter into `graph` and return the `Var` handles indexed by
/// [`ParamId::index`]. With `trainable` set, gradients are tracked.
pub fn bind<T: Scalar>(store: &ParamStore, graph: &mut Graph<T>, trainable: bool) -> Vec<Var> {
    store
        .ids()
        .map(|id| graph.input(store.get(id).cast::<T>(), trainable))
        .collect()
}

/// Per-parameter gradient accumulator for averaging across a batch.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Vec<Tensor<f32>>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradBuffer {
            grads: store
                .ids()
                .map(|id| Tensor::zeros(store.get(id).shape().to_vec()))
                .collect(),
        }
    }

    /// Add the gradients recorded in `graph` for `vars`, scaled by `weight`.
    pub fn accumulate<T: Scalar>(&mut self, graph: &Graph<T>, vars: &[Var], weight: f64) {
        for (slot, var) in self.grads.iter_mut().zip(vars) {
            if let Some(g) = graph.grad(*var) {
                for (dst, src) in slot.data_mut().iter_mut().zip(g.data().iter()) {
                    *dst += (src.as_f64() * weight) as f32;
                }
            }
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<f32> {
        &self.grads[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.grads.iter()
    }

    /// Global L2 norm across every gradient entry, in f64.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|&g| (g as f64) * (g as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Multiply every entry by `scale`.
    pub fn scale(&mut self, scale: f64) {
        for t in &mut self.grads {
            for g in t.data_mut() {
                *g = (*g as f64 * scale) as f32;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

/// Weights drawn from `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
fn init_weight(rng: &mut ChaCha12Rng, fan_in: usize, fan_out: usize) -> Tensor<f32> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data: Vec<f32> = (0..fan_in * fan_out)
        .map(|_| dist.sample(rng) as f32)
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sized to shape")
}

/// Affine layer `x·w + b` with `w: [fan_in, fan_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w = store.add(format!("{path}.w"), init_weight(rng, fan_in, fan_out));
        let b = store.add(format!("{path}.b"), Tensor::zeros(vec![fan_out]));
        Linear { w, b }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        x: Var,
    ) -> Result<Var, NumericsError> {
        g.linear(x, vars[self.w.index()], vars[self.b.index()])
    }
}

/// Stack of linear layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, path: &str, widths: &[usize], rng: &mut ChaCha12Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{path}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        x: Var,
    ) -> Result<Var, NumericsError> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, vars, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Learnable layer norm over the last axis: gain starts at one, bias at zero.
#[derive(Clone, Debug)]
pub struct LayerNormP {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormP {
    pub fn new(store: &mut ParamStore, path: &str, dim: usize) -> Self {
        LayerNormP {
            gain: store.add(format!("{path}.gain"), Tensor::full(vec![dim], 1.0)),
            bias: store.add(format!("{path}.bias"), Tensor::zeros(vec![dim])),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        x: Var,
    ) -> Result<Var, NumericsError> {
        g.layer_norm(x, vars[self.gain.index()], vars[self.bias.index()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(7)
    }

    #[test]
    fn store_tracks_names_and_ids() {
        let mut store = ParamStore::new();
        let a = store.add("a.w", Tensor::zeros(vec![2, 3]));
        let b = store.add("a.b", Tensor::zeros(vec![3]));
        assert_eq!(store.len(), 2);
        assert_eq!(store.total_scalars(), 9);
        assert_eq!(store.name_of(a), "a.w");
        assert_eq!(store.name_of(b), "a.b");
        assert_eq!(store.get(a).shape(), &[2, 3]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn store_rejects_duplicate_names() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::zeros(vec![1]));
        store.add("x", Tensor::zeros(vec![1]));
    }

    #[test]
    fn load_map_checks_names_and_shapes() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(vec![2, 2]));
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), Tensor::full(vec![2, 2], 5.0));
        map.insert("extra.opt".to_string(), Tensor::scalar(1.0));
        store.load_map(&map).unwrap();
        assert_eq!(store.get(ParamId(0)).data(), vec![5.0; 4]);

        let mut bad_shape = BTreeMap::new();
        bad_shape.insert("w".to_string(), Tensor::zeros(vec![4]));
        assert!(matches!(
            store.load_map(&bad_shape),
            Err(ModelError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            store.load_map(&BTreeMap::new()),
            Err(ModelError::MissingParam(_))
        ));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let mut store_a = ParamStore::new();
        let mut store_b = ParamStore::new();
        Linear::new(&mut store_a, "l", 16, 8, &mut rng());
        Linear::new(&mut store_b, "l", 16, 8, &mut rng());
        let (wa, wb) = (store_a.get(ParamId(0)), store_b.get(ParamId(0)));
        assert_eq!(wa.data(), wb.data());
        let bound = 1.0 / 4.0;
        assert!(wa.data().iter().all(|v| v.abs() <= bound));
        // Draws should actually spread over the interval.
        assert!(wa.data().iter().any(|v| *v > bound * 0.5));
        assert!(wa.data().iter().any(|v| *v < -bound * 0.5));
        assert_eq!(store_a.get(ParamId(1)).data(), vec![0.0; 8]);
    }

    #[test]
    fn linear_and_mlp_forward_match_hand_values() {
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 2, 2, &mut rng());
        *store.get_mut(lin.w) = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        *store.get_mut(lin.b) = Tensor::new(vec![2], vec![0.5, 0.5]).unwrap();

        let mut g = Graph::<f64>::inference();
        let vars = bind(&store, &mut g, false);
        let x = g.constant(Tensor::from_rows(&[vec![2.0, 3.0]]).unwrap());
        let y = lin.forward(&mut g, &vars, x).unwrap();
        assert_eq!(g.value(y).data(), vec![2.5, -2.5]);
    }

    #[test]
    fn mlp_applies_relu_between_layers_only() {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[1, 1, 1], &mut rng());
        // First layer maps x -> -x (so ReLU clips it), second maps h -> h - 1.
        *store.get_mut(mlp.layers[0].w) = Tensor::new(vec![1, 1], vec![-1.0]).unwrap();
        *store.get_mut(mlp.layers[1].w) = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        *store.get_mut(mlp.layers[1].b) = Tensor::new(vec![1], vec![-1.0]).unwrap();

        let mut g = Graph::<f64>::inference();
        let vars = bind(&store, &mut g, false);
        let x = g.constant(Tensor::from_rows(&[vec![2.0]]).unwrap());
        let y = mlp.forward(&mut g, &vars, x).unwrap();
        // relu(-2) = 0, then 0 - 1 = -1; a final ReLU would have clipped to 0.
        assert_eq!(g.value(y).data(), vec![-1.0]);
    }

    #[test]
    fn grad_buffer_accumulates_and_clips() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());

        let mut g = Graph::<f64>::new(true, 0);
        let vars = bind(&store, &mut g, true);
        let s = g.sum_all(vars[0]);
        g.backward(s).unwrap();

        let mut buf = GradBuffer::zeros_like(&store);
        buf.accumulate(&g, &vars, 0.5);
        buf.accumulate(&g, &vars, 0.5);
        assert_eq!(buf.get(id).data(), vec![1.0, 1.0]);
        assert!((buf.global_norm() - std::f64::consts::SQRT_2).abs() < 1e-12);
        buf.scale(2.0);
        assert_eq!(buf.get(id).data(), vec![2.0, 2.0]);
        assert!(buf.is_finite());
    }
}

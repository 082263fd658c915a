//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] owns every tensor produced during one forward pass. Ops append
//! nodes and return [`Var`] handles; inputs of a node always precede it on the
//! tape, so [`Graph::backward`] is a single reverse sweep. A graph lives for
//! one forward/backward pass and is then dropped; parameters live outside and
//! are re-entered as leaves each pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{NumericsError, Scalar, Tensor};

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Point-to-point distance used by [`Graph::pairwise_dist`] and the Chamfer
/// metrics built on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    /// Sum of absolute coordinate differences.
    L1,
    /// Euclidean distance.
    L2,
    /// Squared Euclidean distance (smooth everywhere, the training default).
    L2Squared,
}

enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, T),
    Relu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        // per-row statistics saved by the forward pass
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    ReduceAxis {
        x: Var,
        axis: usize,
        arg: Vec<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    GatherRows {
        x: Var,
        indices: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Transpose2(Var),
    Reshape(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    SumAll(Var),
    MeanAll(Var),
    PairwiseDist {
        p: Var,
        g: Var,
        norm: DistanceNorm,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    needs_grad: bool,
    op: Op<T>,
}

/// Computation tape. Single-threaded during a pass.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    rng: ChaCha12Rng,
    training: bool,
}

impl<T: Scalar> Graph<T> {
    /// `training` enables dropout; `seed` drives the dropout masks.
    pub fn new(training: bool, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
            training,
        }
    }

    /// Inference-mode graph: dropout is the identity.
    pub fn inference() -> Self {
        Graph::new(false, 0)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Enter a tensor as a leaf. `requires_grad` marks it as a gradient sink.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by [`Graph::backward`], if any reached this node.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn child_needs_grad(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    // ── forward ops ──────────────────────────────────────────

    /// `a [m×k] · b [k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NumericsError::DimMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(vec![m, n], out).expect("matmul output shape");
        let ng = self.child_needs_grad(&[a, b]);
        Ok(self.push(t, ng, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Element-wise binary op with leading-dim broadcasting: shapes must be
    /// equal, or one shape must be a suffix of the other (the smaller operand
    /// repeats across the leading dims).
    fn binary_elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !(shapes_broadcast(&sa, &sb)) {
            return Err(NumericsError::DimMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let (big, small, a_is_big) = if sa.len() >= sb.len() {
            (a, b, true)
        } else {
            (b, a, false)
        };
        let bn = self.value(big).numel();
        let sn = self.value(small).numel();
        let mut out = Vec::with_capacity(bn);
        {
            let bd = self.value(big).data();
            let sd = self.value(small).data();
            for i in 0..bn {
                let (x, y) = if a_is_big {
                    (bd[i], sd[i % sn])
                } else {
                    (sd[i % sn], bd[i])
                };
                out.push(f(x, y));
            }
        }
        let shape = self.shape(big).to_vec();
        let t = Tensor::new(shape, out).expect("elementwise output shape");
        let ng = self.child_needs_grad(&[a, b]);
        Ok(self.push(t, ng, op))
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a).map(|v| v * c);
        let ng = self.child_needs_grad(&[a]);
        self.push(t, ng, Op::MulScalar(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.child_needs_grad(&[a]);
        self.push(t, ng, Op::Relu(a))
    }

    /// Numerically stabilized softmax along `axis`; each slice sums to 1.
    pub fn softmax_axis(&mut self, x: Var, axis: usize) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::AxisOutOfRange { axis, shape });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mut m = xd[idx(0)];
                for j in 1..len {
                    if xd[idx(j)] > m {
                        m = xd[idx(j)];
                    }
                }
                let mut s = T::zero();
                for j in 0..len {
                    let e = (xd[idx(j)] - m).exp();
                    out[idx(j)] = e;
                    s += e;
                }
                for j in 0..len {
                    out[idx(j)] = out[idx(j)] / s;
                }
            }
        }
        let t = Tensor::new(shape, out).expect("softmax output shape");
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(t, ng, Op::Softmax { x, axis }))
    }

    /// Per-row normalization over the last dim, then affine by `gain`/`bias`
    /// (both shape `[d]`). Epsilon 1e-5 on the variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("layer_norm input rank >= 1");
        for (v, name) in [(gain, "layer_norm gain"), (bias, "layer_norm bias")] {
            let s = self.shape(v);
            if s != [d] {
                return Err(NumericsError::DimMismatch {
                    op: name,
                    lhs: shape.clone(),
                    rhs: s.to_vec(),
                });
            }
        }
        let rows = self.value(x).numel() / d;
        let eps = T::layer_norm_eps();
        let xd = self.value(x).data();
        let gd = self.value(gain).data();
        let bd = self.value(bias).data();
        let mut out = vec![T::zero(); xd.len()];
        let mut means = Vec::with_capacity(rows);
        let mut inv_stds = Vec::with_capacity(rows);
        let dn = T::from_f64(d as f64);
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean = mean / dn;
            let mut var = T::zero();
            for &v in row {
                let c = v - mean;
                var += c * c;
            }
            var = var / dn;
            let inv_std = (var + eps).sqrt().recip();
            for j in 0..d {
                let xhat = (row[j] - mean) * inv_std;
                out[r * d + j] = xhat * gd[j] + bd[j];
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        let t = Tensor::new(shape, out).expect("layer_norm output shape");
        let ng = self.child_needs_grad(&[x, gain, bias]);
        Ok(self.push(
            t,
            ng,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }

    /// Max over `axis`, dropping it. Also returns the winning indices
    /// (ties broken by lowest index); backward routes gradient only there.
    pub fn max_over_axis(&mut self, x: Var, axis: usize) -> Result<(Var, Vec<usize>), NumericsError> {
        self.reduce_axis(x, axis, false)
    }

    /// Min over `axis`; same contract as [`Graph::max_over_axis`].
    pub fn min_over_axis(&mut self, x: Var, axis: usize) -> Result<(Var, Vec<usize>), NumericsError> {
        self.reduce_axis(x, axis, true)
    }

    fn reduce_axis(
        &mut self,
        x: Var,
        axis: usize,
        is_min: bool,
    ) -> Result<(Var, Vec<usize>), NumericsError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::AxisOutOfRange { axis, shape });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let xd = self.value(x).data();
        let mut values = Vec::with_capacity(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mut best = xd[idx(0)];
                let mut best_j = 0usize;
                for j in 1..len {
                    let v = xd[idx(j)];
                    let better = if is_min { v < best } else { v > best };
                    if better {
                        best = v;
                        best_j = j;
                    }
                }
                values.push(best);
                arg.push(best_j);
            }
        }
        let mut out_shape: Vec<usize> = shape[..axis].to_vec();
        out_shape.extend_from_slice(&shape[axis + 1..]);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let t = Tensor::new(out_shape, values).expect("reduce output shape");
        let ng = self.child_needs_grad(&[x]);
        let arg_out = arg.clone();
        let v = self.push(t, ng, Op::ReduceAxis { x, axis, arg });
        Ok((v, arg_out))
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat_axis(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumericsError> {
        assert!(!inputs.is_empty(), "concat_axis needs at least one input");
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(NumericsError::AxisOutOfRange { axis, shape: first });
        }
        let mut axis_total = 0usize;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(NumericsError::DimMismatch {
                    op: "concat_axis",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut out = vec![T::zero(); out_shape.iter().product()];
        let mut offset = 0usize;
        for &v in inputs {
            let len_v = self.shape(v)[axis];
            let vd = self.value(v).data();
            for o in 0..outer {
                for j in 0..len_v {
                    let src = (o * len_v + j) * inner;
                    let dst = (o * axis_total + offset + j) * inner;
                    out[dst..dst + inner].copy_from_slice(&vd[src..src + inner]);
                }
            }
            offset += len_v;
        }
        let t = Tensor::new(out_shape, out).expect("concat output shape");
        let ng = self.child_needs_grad(inputs);
        Ok(self.push(
            t,
            ng,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Select rows (leading-axis slices) by index; backward scatter-adds.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(NumericsError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                size: n,
            });
        }
        let row = shape[1..].iter().product::<usize>().max(1);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            out.extend_from_slice(&xd[i * row..(i + 1) * row]);
        }
        let mut out_shape = vec![indices.len()];
        out_shape.extend_from_slice(&shape[1..]);
        let t = Tensor::new(out_shape, out).expect("gather output shape");
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(
            t,
            ng,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Columns `[start, start+len)` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || start + len > shape[1] || len == 0 {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                size: shape.get(1).copied().unwrap_or(0),
            });
        }
        let (rows, cols) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xd[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], out).expect("slice output shape");
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(t, ng, Op::SliceCols { x, start }))
    }

    pub fn transpose2(&mut self, x: Var) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(NumericsError::DimMismatch {
                op: "transpose2",
                lhs: shape,
                rhs: vec![],
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xd[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out).expect("transpose output shape");
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(t, ng, Op::Transpose2(x)))
    }

    /// View with a new shape; element count must match.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumericsError> {
        let t = self.value(x).reshaped(shape)?;
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(t, ng, Op::Reshape(x)))
    }

    /// `x·W + b` for `x [n×in]`, `w [in×out]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// In training mode zeroes each element with probability `p` and scales
    /// survivors by `1/(1-p)`; in eval mode it is the identity.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::BadProbability { p });
        }
        if !self.training || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - p));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let xd = self.value(x).data();
        let out: Vec<T> = xd.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("dropout output shape");
        let ng = self.child_needs_grad(&[x]);
        Ok(self.push(t, ng, Op::Dropout { x, mask }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let mut s = T::zero();
        for &v in self.value(x).data() {
            s += v;
        }
        let ng = self.child_needs_grad(&[x]);
        self.push(Tensor::scalar(s), ng, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let mut s = T::zero();
        for &v in self.value(x).data() {
            s += v;
        }
        let mean = s / T::from_f64(n as f64);
        let ng = self.child_needs_grad(&[x]);
        self.push(Tensor::scalar(mean), ng, Op::MeanAll(x))
    }

    /// All-pairs distance matrix `[n×m]` between row sets `p [n×c]` and
    /// `g [m×c]` under `norm`.
    pub fn pairwise_dist(
        &mut self,
        p: Var,
        g: Var,
        norm: DistanceNorm,
    ) -> Result<Var, NumericsError> {
        let (sp, sg) = (self.shape(p).to_vec(), self.shape(g).to_vec());
        if sp.len() != 2 || sg.len() != 2 || sp[1] != sg[1] {
            return Err(NumericsError::DimMismatch {
                op: "pairwise_dist",
                lhs: sp,
                rhs: sg,
            });
        }
        let (n, m, c) = (sp[0], sg[0], sp[1]);
        let pd = self.value(p).data();
        let gd = self.value(g).data();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let pi = &pd[i * c..(i + 1) * c];
            for j in 0..m {
                let gj = &gd[j * c..(j + 1) * c];
                let mut acc = T::zero();
                match norm {
                    DistanceNorm::L1 => {
                        for k in 0..c {
                            acc += (pi[k] - gj[k]).abs();
                        }
                    }
                    DistanceNorm::L2 | DistanceNorm::L2Squared => {
                        for k in 0..c {
                            let d = pi[k] - gj[k];
                            acc += d * d;
                        }
                        if matches!(norm, DistanceNorm::L2) {
                            acc = acc.sqrt();
                        }
                    }
                }
                out[i * m + j] = acc;
            }
        }
        let t = Tensor::new(vec![n, m], out).expect("pairwise output shape");
        let ng = self.child_needs_grad(&[p, g]);
        Ok(self.push(t, ng, Op::PairwiseDist { p, g, norm }))
    }

    // ── backward ──────────────────────────────────────────

    /// Reverse sweep from a one-element output. Gradients accumulate into
    /// every node with `needs_grad`; read them back via [`Graph::grad`].
    pub fn backward(&mut self, output: Var) -> Result<(), NumericsError> {
        let out_node = &self.nodes[output.0];
        if out_node.value.numel() != 1 {
            return Err(NumericsError::NonScalarOutput {
                op: "backward",
                shape: out_node.value.shape().to_vec(),
            });
        }
        if !out_node.needs_grad {
            return Ok(());
        }
        let seed = Tensor::full(out_node.value.shape().to_vec(), T::one());
        self.nodes[output.0].grad = Some(seed);

        for i in (0..=output.0).rev() {
            if self.nodes[i].grad.is_none() || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &tail[0];
            let upstream = node.grad.as_ref().expect("checked above");
            backprop_node(&node.op, &node.value, upstream, head);
        }
        Ok(())
    }
}

fn backprop_node<T: Scalar>(op: &Op<T>, value: &Tensor<T>, upstream: &Tensor<T>, head: &mut [Node<T>]) {
    let up = upstream.data();
    match op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (m, k) = {
                let s = head[a.0].value.shape();
                (s[0], s[1])
            };
            let n = head[b.0].value.shape()[1];
            if head[a.0].needs_grad {
                // dA = dC · Bᵀ
                let bd = head[b.0].value.data().to_vec();
                let mut da = vec![T::zero(); m * k];
                for i in 0..m {
                    for j in 0..n {
                        let u = up[i * n + j];
                        if u == T::zero() {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += u * bd[p * n + j];
                        }
                    }
                }
                accumulate(&mut head[a.0], &da);
            }
            if head[b.0].needs_grad {
                // dB = Aᵀ · dC
                let ad = head[a.0].value.data().to_vec();
                let mut db = vec![T::zero(); k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av == T::zero() {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += av * up[i * n + j];
                        }
                    }
                }
                accumulate(&mut head[b.0], &db);
            }
        }
        Op::Add(a, b) => {
            backprop_broadcast(head, *a, up, |u, _, _| u);
            backprop_broadcast(head, *b, up, |u, _, _| u);
        }
        Op::Sub(a, b) => {
            backprop_broadcast(head, *a, up, |u, _, _| u);
            backprop_broadcast(head, *b, up, |u, _, _| -u);
        }
        Op::Mul(a, b) => {
            if head[a.0].needs_grad {
                let bd = other_factor(head, *b, up.len());
                backprop_broadcast(head, *a, up, |u, i, _| u * bd[i]);
            }
            if head[b.0].needs_grad {
                let ad = other_factor(head, *a, up.len());
                backprop_broadcast(head, *b, up, |u, i, _| u * ad[i]);
            }
        }
        Op::MulScalar(a, c) => {
            if head[a.0].needs_grad {
                let da: Vec<T> = up.iter().map(|&u| u * *c).collect();
                accumulate(&mut head[a.0], &da);
            }
        }
        Op::Relu(a) => {
            if head[a.0].needs_grad {
                let xd = head[a.0].value.data();
                let da: Vec<T> = up
                    .iter()
                    .zip(xd)
                    .map(|(&u, &x)| if x > T::zero() { u } else { T::zero() })
                    .collect();
                accumulate(&mut head[a.0], &da);
            }
        }
        Op::Softmax { x, axis } => {
            if head[x.0].needs_grad {
                let y = value.data();
                let (outer, len, inner) = axis_split(value.shape(), *axis);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let mut dot = T::zero();
                        for j in 0..len {
                            dot += up[idx(j)] * y[idx(j)];
                        }
                        for j in 0..len {
                            dx[idx(j)] = y[idx(j)] * (up[idx(j)] - dot);
                        }
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            mean,
            inv_std,
        } => {
            let d = *value.shape().last().expect("rank >= 1");
            let rows = value.numel() / d;
            let xd = head[x.0].value.data().to_vec();
            let gd = head[gain.0].value.data().to_vec();
            let dn = T::from_f64(d as f64);
            if head[gain.0].needs_grad || head[bias.0].needs_grad {
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        let xhat = (xd[r * d + j] - mean[r]) * inv_std[r];
                        dgain[j] += up[r * d + j] * xhat;
                        dbias[j] += up[r * d + j];
                    }
                }
                if head[gain.0].needs_grad {
                    accumulate(&mut head[gain.0], &dgain);
                }
                if head[bias.0].needs_grad {
                    accumulate(&mut head[bias.0], &dbias);
                }
            }
            if head[x.0].needs_grad {
                let mut dx = vec![T::zero(); xd.len()];
                for r in 0..rows {
                    // dL/dxhat = up * gain; then the standard layer-norm pullback
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for j in 0..d {
                        let dxh = up[r * d + j] * gd[j];
                        let xhat = (xd[r * d + j] - mean[r]) * inv_std[r];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat;
                    }
                    for j in 0..d {
                        let dxh = up[r * d + j] * gd[j];
                        let xhat = (xd[r * d + j] - mean[r]) * inv_std[r];
                        dx[r * d + j] =
                            inv_std[r] * (dxh - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::ReduceAxis { x, axis, arg } => {
            if head[x.0].needs_grad {
                let shape = head[x.0].value.shape().to_vec();
                let (outer, len, inner) = axis_split(&shape, *axis);
                let mut dx = vec![T::zero(); head[x.0].value.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let j = arg[o * inner + i];
                        dx[(o * len + j) * inner + i] += up[o * inner + i];
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::Concat { inputs, axis } => {
            let out_shape = value.shape();
            let (outer, total, inner) = axis_split(out_shape, *axis);
            let mut offset = 0usize;
            for &v in inputs {
                let len_v = head[v.0].value.shape()[*axis];
                if head[v.0].needs_grad {
                    let mut dv = vec![T::zero(); head[v.0].value.numel()];
                    for o in 0..outer {
                        for j in 0..len_v {
                            let src = (o * total + offset + j) * inner;
                            let dst = (o * len_v + j) * inner;
                            for k in 0..inner {
                                dv[dst + k] += up[src + k];
                            }
                        }
                    }
                    accumulate(&mut head[v.0], &dv);
                }
                offset += len_v;
            }
        }
        Op::GatherRows { x, indices } => {
            if head[x.0].needs_grad {
                let row = head[x.0].value.shape()[1..].iter().product::<usize>().max(1);
                let mut dx = vec![T::zero(); head[x.0].value.numel()];
                for (r, &i) in indices.iter().enumerate() {
                    for k in 0..row {
                        dx[i * row + k] += up[r * row + k];
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::SliceCols { x, start } => {
            if head[x.0].needs_grad {
                let shape = head[x.0].value.shape().to_vec();
                let (rows, cols) = (shape[0], shape[1]);
                let len = value.shape()[1];
                let mut dx = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    for j in 0..len {
                        dx[r * cols + start + j] += up[r * len + j];
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::Transpose2(x) => {
            if head[x.0].needs_grad {
                let (r, c) = {
                    let s = head[x.0].value.shape();
                    (s[0], s[1])
                };
                let mut dx = vec![T::zero(); r * c];
                for i in 0..c {
                    for j in 0..r {
                        dx[j * c + i] += up[i * r + j];
                    }
                }
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::Reshape(x) => {
            if head[x.0].needs_grad {
                accumulate(&mut head[x.0], up);
            }
        }
        Op::Dropout { x, mask } => {
            if head[x.0].needs_grad {
                let dx: Vec<T> = up.iter().zip(mask).map(|(&u, &m)| u * m).collect();
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::SumAll(x) => {
            if head[x.0].needs_grad {
                let u = up[0];
                let dx = vec![u; head[x.0].value.numel()];
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::MeanAll(x) => {
            if head[x.0].needs_grad {
                let n = head[x.0].value.numel();
                let u = up[0] / T::from_f64(n as f64);
                let dx = vec![u; n];
                accumulate(&mut head[x.0], &dx);
            }
        }
        Op::PairwiseDist { p, g, norm } => {
            let (n, c) = {
                let s = head[p.0].value.shape();
                (s[0], s[1])
            };
            let m = head[g.0].value.shape()[0];
            let pd = head[p.0].value.data().to_vec();
            let gd = head[g.0].value.data().to_vec();
            let dist = value.data();
            let mut dp = vec![T::zero(); n * c];
            let mut dg = vec![T::zero(); m * c];
            for i in 0..n {
                for j in 0..m {
                    let u = up[i * m + j];
                    if u == T::zero() {
                        continue;
                    }
                    for k in 0..c {
                        let diff = pd[i * c + k] - gd[j * c + k];
                        let dd = match norm {
                            DistanceNorm::L1 => {
                                if diff > T::zero() {
                                    T::one()
                                } else if diff < T::zero() {
                                    -T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            DistanceNorm::L2 => {
                                let d = dist[i * m + j];
                                if d > T::zero() {
                                    diff / d
                                } else {
                                    T::zero()
                                }
                            }
                            DistanceNorm::L2Squared => diff + diff,
                        };
                        dp[i * c + k] += u * dd;
                        dg[j * c + k] -= u * dd;
                    }
                }
            }
            if head[p.0].needs_grad {
                accumulate(&mut head[p.0], &dp);
            }
            if head[g.0].needs_grad {
                accumulate(&mut head[g.0], &dg);
            }
        }
    }
}

/// Pull `up` back into operand `v` of a broadcast elementwise op, applying
/// `f(upstream, flat_index, small_len)` per output element.
fn backprop_broadcast<T: Scalar>(
    head: &mut [Node<T>],
    v: Var,
    up: &[T],
    f: impl Fn(T, usize, usize) -> T,
) {
    if !head[v.0].needs_grad {
        return;
    }
    let vn = head[v.0].value.numel();
    let mut dv = vec![T::zero(); vn];
    for (i, &u) in up.iter().enumerate() {
        dv[i % vn] += f(u, i, vn);
    }
    accumulate(&mut head[v.0], &dv);
}

/// Expanded data of the *other* operand in a broadcast `mul`, indexed like
/// the output.
fn other_factor<T: Scalar>(head: &[Node<T>], v: Var, out_len: usize) -> Vec<T> {
    let d = head[v.0].value.data();
    (0..out_len).map(|i| d[i % d.len()]).collect()
}

fn accumulate<T: Scalar>(node: &mut Node<T>, delta: &[T]) {
    let grad = node
        .grad
        .get_or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
    for (g, &d) in grad.data_mut().iter_mut().zip(delta) {
        *g += d;
    }
}

/// (outer, axis length, inner) decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn shapes_broadcast(a: &[usize], b: &[usize]) -> bool {
    if a.len() >= b.len() {
        a[a.len() - b.len()..] == *b
    } else {
        b[b.len() - a.len()..] == *a
    }
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

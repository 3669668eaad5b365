//! Reverse-mode automatic differentiation over a fixed set of tensor
//! primitives.
//!
//! A [`Graph`] is an append-only tape. Every operation evaluates eagerly,
//! stores its result and whatever it needs for the backward pass, and returns
//! a [`NodeId`]. Because inputs always precede outputs on the tape, the node
//! order is a topological order and [`Graph::backward`] simply walks it in
//! reverse, visiting each node once.

use std::sync::atomic::{AtomicU32, Ordering};

use super::error::{NumericsError, Result};
use super::scalar::Scalar;
use super::tensor::{gemm_nt_acc, gemm_tn_acc, log_sum_exp, softmax_in_place, Tensor};

static NEXT_GRAPH_ID: AtomicU32 = AtomicU32::new(1);

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    graph: u32,
    index: usize,
}

impl NodeId {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Scale(usize, S),
    Transpose(usize),
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Gelu(usize),
    Softmax(usize),
    CausalAttention {
        q: usize,
        k: usize,
        v: usize,
        seq_len: usize,
        n_heads: usize,
        probs: Vec<S>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<S>,
        count: usize,
    },
    NormalizeRows {
        x: usize,
        norms: Vec<S>,
    },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Append-only computation tape.
#[derive(Debug)]
pub struct Graph<S> {
    id: u32,
    nodes: Vec<Node<S>>,
}

/// Gradients produced by [`Graph::backward`], indexed by leaf [`NodeId`].
#[derive(Debug)]
pub struct Gradients<S> {
    graph: u32,
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        if id.graph != self.graph {
            return None;
        }
        self.grads.get(id.index).and_then(Option::as_ref)
    }

    /// Gradient of a leaf, materializing exact zeros for disconnected leaves.
    pub fn take_or_zeros(&mut self, id: NodeId) -> Result<Tensor<S>> {
        if id.graph != self.graph || id.index >= self.grads.len() {
            return Err(NumericsError::ForeignNode(id.index));
        }
        Ok(self.grads[id.index]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.index])))
    }
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        assert_eq!(id.graph, self.id, "node from another graph");
        &self.nodes[id.index].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn resolve(&self, id: NodeId) -> Result<usize> {
        if id.graph != self.id || id.index >= self.nodes.len() {
            return Err(NumericsError::ForeignNode(id.index));
        }
        Ok(id.index)
    }

    fn val(&self, i: usize) -> &Tensor<S> {
        &self.nodes[i].value
    }

    fn grad_flag(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn dims2(&self, i: usize, op: &'static str) -> Result<(usize, usize)> {
        match self.val(i).shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(NumericsError::ShapeMismatch {
                op,
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.resolve(a)?, self.resolve(b)?);
        let value = self.val(ia).matmul(self.val(ib))?;
        let g = self.grad_flag(&[ia, ib]);
        Ok(self.push(value, Op::Matmul(ia, ib), g))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.resolve(a)?, self.resolve(b)?);
        let value = self.val(ia).add(self.val(ib))?;
        let g = self.grad_flag(&[ia, ib]);
        Ok(self.push(value, Op::Add(ia, ib), g))
    }

    /// Adds a bias vector of length `cols` to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ix, ib) = (self.resolve(x)?, self.resolve(bias)?);
        let cols = self.val(ix).cols();
        if self.val(ib).len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                left: self.val(ix).shape().to_vec(),
                right: self.val(ib).shape().to_vec(),
            });
        }
        let mut value = self.val(ix).clone();
        let b = self.val(ib).data().to_vec();
        for row in value.data_mut().chunks_mut(cols) {
            for (v, &bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let g = self.grad_flag(&[ix, ib]);
        Ok(self.push(value, Op::AddBias(ix, ib), g))
    }

    pub fn scale(&mut self, x: NodeId, factor: S) -> Result<NodeId> {
        let ix = self.resolve(x)?;
        let value = self.val(ix).scale(factor);
        let g = self.grad_flag(&[ix]);
        Ok(self.push(value, Op::Scale(ix, factor), g))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x)?;
        let value = self.val(ix).transpose()?;
        let g = self.grad_flag(&[ix]);
        Ok(self.push(value, Op::Transpose(ix), g))
    }

    /// Gathers rows of a `[vocab × d]` table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let it = self.resolve(table)?;
        let (vocab, d) = self.dims2(it, "embedding")?;
        if ids.is_empty() {
            return Err(NumericsError::Invalid("embedding lookup with no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(NumericsError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    size: vocab,
                });
            }
            data.extend_from_slice(self.val(it).row(id));
        }
        let value = Tensor::matrix(ids.len(), d, data)?;
        let g = self.grad_flag(&[it]);
        Ok(self.push(
            value,
            Op::Embedding {
                table: it,
                ids: ids.to_vec(),
            },
            g,
        ))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ix, ig, ib) = (self.resolve(x)?, self.resolve(gain)?, self.resolve(bias)?);
        let cols = self.val(ix).cols();
        if self.val(ig).len() != cols || self.val(ib).len() != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                left: self.val(ix).shape().to_vec(),
                right: self.val(ig).shape().to_vec(),
            });
        }
        let n = S::from_usize_lossy(cols);
        let eps = S::lit(LAYER_NORM_EPS);
        let rows = self.val(ix).rows();
        let mut xhat = Vec::with_capacity(rows * cols);
        let mut rstd = Vec::with_capacity(rows);
        for row in self.val(ix).data().chunks(cols) {
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let r = S::one() / (var + eps).sqrt();
            rstd.push(r);
            xhat.extend(row.iter().map(|&v| (v - mean) * r));
        }
        let gv = self.val(ig).data();
        let bv = self.val(ib).data();
        let out: Vec<S> = xhat
            .chunks(cols)
            .flat_map(|row| row.iter().zip(gv).zip(bv).map(|((&h, &g), &b)| h * g + b))
            .collect();
        let value = Tensor::new(self.val(ix).shape().to_vec(), out)?;
        let g = self.grad_flag(&[ix, ig, ib]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: ix,
                gain: ig,
                bias: ib,
                xhat,
                rstd,
            },
            g,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x)?;
        let value = self.val(ix).map(gelu_value);
        let g = self.grad_flag(&[ix]);
        Ok(self.push(value, Op::Gelu(ix), g))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x)?;
        let value = self.val(ix).softmax()?;
        let g = self.grad_flag(&[ix]);
        Ok(self.push(value, Op::Softmax(ix), g))
    }

    /// Multi-head causal self-attention over independent blocks of
    /// `seq_len` rows.
    ///
    /// `q`, `k`, `v` are `[blocks·seq_len × d]` with heads laid out as
    /// contiguous column groups of width `d / n_heads`.
    pub fn causal_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        seq_len: usize,
        n_heads: usize,
    ) -> Result<NodeId> {
        let (iq, ik, iv) = (self.resolve(q)?, self.resolve(k)?, self.resolve(v)?);
        let (n, d) = self.dims2(iq, "causal_attention")?;
        for i in [ik, iv] {
            if self.val(i).shape() != [n, d] {
                return Err(NumericsError::ShapeMismatch {
                    op: "causal_attention",
                    left: vec![n, d],
                    right: self.val(i).shape().to_vec(),
                });
            }
        }
        if seq_len == 0 || n % seq_len != 0 || n_heads == 0 || d % n_heads != 0 {
            return Err(NumericsError::Invalid(format!(
                "attention layout: rows {n}, seq_len {seq_len}, d {d}, heads {n_heads}"
            )));
        }
        let blocks = n / seq_len;
        let dh = d / n_heads;
        let scale = S::one() / S::from_usize_lossy(dh).sqrt();
        let (qd, kd, vd) = (self.val(iq).data(), self.val(ik).data(), self.val(iv).data());
        let t = seq_len;
        let mut probs = vec![S::zero(); blocks * n_heads * t * t];
        let mut out = vec![S::zero(); n * d];
        for b in 0..blocks {
            for h in 0..n_heads {
                let off = h * dh;
                let pbase = (b * n_heads + h) * t * t;
                for i in 0..t {
                    let qi = &qd[(b * t + i) * d + off..(b * t + i) * d + off + dh];
                    let prow = &mut probs[pbase + i * t..pbase + i * t + i + 1];
                    for (j, p) in prow.iter_mut().enumerate() {
                        let kj = &kd[(b * t + j) * d + off..(b * t + j) * d + off + dh];
                        *p = dot(qi, kj) * scale;
                    }
                    softmax_in_place(prow);
                    let orow = &mut out[(b * t + i) * d + off..(b * t + i) * d + off + dh];
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &vd[(b * t + j) * d + off..(b * t + j) * d + off + dh];
                        for (o, &vv) in orow.iter_mut().zip(vj) {
                            *o += p * vv;
                        }
                    }
                }
            }
        }
        let value = Tensor::matrix(n, d, out)?;
        let g = self.grad_flag(&[iq, ik, iv]);
        Ok(self.push(
            value,
            Op::CausalAttention {
                q: iq,
                k: ik,
                v: iv,
                seq_len,
                n_heads,
                probs,
            },
            g,
        ))
    }

    /// Mean negative log-likelihood (nats) of `targets` under row-wise
    /// softmax of `logits`, over rows where `mask` is set.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        let il = self.resolve(logits)?;
        let (rows, vocab) = self.dims2(il, "cross_entropy")?;
        if targets.len() != rows || mask.len() != rows {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                left: vec![rows, vocab],
                right: vec![targets.len(), mask.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(NumericsError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                size: vocab,
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NumericsError::EmptyMask);
        }
        self.val(il).check_finite("cross_entropy logits")?;
        let mut probs = self.val(il).data().to_vec();
        let mut total = S::zero();
        for (r, row) in probs.chunks_mut(vocab).enumerate() {
            if mask[r] {
                total += log_sum_exp(row) - row[targets[r]];
            }
            softmax_in_place(row);
        }
        let value = Tensor::scalar(total / S::from_usize_lossy(count));
        let g = self.grad_flag(&[il]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: il,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            g,
        ))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x)?;
        let cols = self.val(ix).cols();
        let mut value = self.val(ix).clone();
        let mut norms = Vec::with_capacity(value.rows());
        for row in value.data_mut().chunks_mut(cols) {
            let nrm = row.iter().map(|&v| v * v).sum::<S>().sqrt().max(S::lit(1e-12));
            norms.push(nrm);
            for v in row.iter_mut() {
                *v /= nrm;
            }
        }
        let g = self.grad_flag(&[ix]);
        Ok(self.push(value, Op::NormalizeRows { x: ix, norms }, g))
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>> {
        let il = self.resolve(loss)?;
        if !self.val(il).is_scalar() {
            return Err(NumericsError::NonScalarLoss(self.val(il).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[il] = Some(Tensor::filled(self.val(il).shape(), S::one()));
        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &node.op, g, &mut grads, &mut out)?;
        }
        Ok(Gradients {
            graph: self.id,
            grads: out,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], i: usize, g: Tensor<S>) -> Result<()> {
        if !self.nodes[i].needs_grad {
            return Ok(());
        }
        match &mut grads[i] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(
        &self,
        i: usize,
        op: &Op<S>,
        g: Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        out: &mut [Option<Tensor<S>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => out[i] = Some(g),
            Op::Matmul(a, b) => {
                let (m, k) = self.dims2(*a, "matmul")?;
                let n = self.val(*b).cols();
                if self.nodes[*a].needs_grad {
                    let mut ga = vec![S::zero(); m * k];
                    gemm_nt_acc(m, n, k, g.data(), self.val(*b).data(), &mut ga);
                    self.accumulate(grads, *a, Tensor::matrix(m, k, ga)?)?;
                }
                if self.nodes[*b].needs_grad {
                    let mut gb = vec![S::zero(); k * n];
                    gemm_tn_acc(k, m, n, self.val(*a).data(), g.data(), &mut gb);
                    self.accumulate(grads, *b, Tensor::matrix(k, n, gb)?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone())?;
                self.accumulate(grads, *a, g)?;
            }
            Op::AddBias(x, bias) => {
                let cols = g.cols();
                let mut gb = vec![S::zero(); cols];
                for row in g.data().chunks(cols) {
                    for (acc, &v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let gb = Tensor::new(self.val(*bias).shape().to_vec(), gb)?;
                self.accumulate(grads, *bias, gb)?;
                self.accumulate(grads, *x, g)?;
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, g.scale(*f))?,
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()?)?,
            Op::Embedding { table, ids } => {
                let mut gt = Tensor::zeros(self.val(*table).shape());
                for (r, &id) in ids.iter().enumerate() {
                    for (acc, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                self.accumulate(grads, *table, gt)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let cols = g.cols();
                let n = S::from_usize_lossy(cols);
                let gv = self.val(*gain).data();
                let mut ggain = vec![S::zero(); cols];
                let mut gbias = vec![S::zero(); cols];
                let mut gx = vec![S::zero(); g.len()];
                for (r, (grow, hrow)) in g.data().chunks(cols).zip(xhat.chunks(cols)).enumerate() {
                    let mut mean_dh = S::zero();
                    let mut mean_dh_h = S::zero();
                    for c in 0..cols {
                        ggain[c] += grow[c] * hrow[c];
                        gbias[c] += grow[c];
                        let dh = grow[c] * gv[c];
                        mean_dh += dh;
                        mean_dh_h += dh * hrow[c];
                    }
                    mean_dh /= n;
                    mean_dh_h /= n;
                    let xrow = &mut gx[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        let dh = grow[c] * gv[c];
                        xrow[c] = rstd[r] * (dh - mean_dh - hrow[c] * mean_dh_h);
                    }
                }
                self.accumulate(grads, *gain, Tensor::new(self.val(*gain).shape().to_vec(), ggain)?)?;
                self.accumulate(grads, *bias, Tensor::new(self.val(*bias).shape().to_vec(), gbias)?)?;
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), gx)?)?;
            }
            Op::Gelu(x) => {
                let xv = self.val(*x).data();
                let data = g.data().iter().zip(xv).map(|(&gv, &v)| gv * gelu_grad(v)).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?)?;
            }
            Op::Softmax(x) => {
                let y = &self.nodes[i].value;
                let cols = y.cols();
                let mut gx = vec![S::zero(); y.len()];
                for ((grow, yrow), xrow) in g.data().chunks(cols).zip(y.data().chunks(cols)).zip(gx.chunks_mut(cols)) {
                    let s = dot(grow, yrow);
                    for c in 0..cols {
                        xrow[c] = yrow[c] * (grow[c] - s);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?)?;
            }
            Op::CausalAttention {
                q,
                k,
                v,
                seq_len,
                n_heads,
                probs,
            } => {
                let (n, d) = self.dims2(*q, "causal_attention")?;
                let (t, heads) = (*seq_len, *n_heads);
                let dh = d / heads;
                let scale = S::one() / S::from_usize_lossy(dh).sqrt();
                let (qd, kd, vd) = (self.val(*q).data(), self.val(*k).data(), self.val(*v).data());
                let gd = g.data();
                let mut gq = vec![S::zero(); n * d];
                let mut gk = vec![S::zero(); n * d];
                let mut gv = vec![S::zero(); n * d];
                let mut dp = vec![S::zero(); t];
                for b in 0..n / t {
                    for h in 0..heads {
                        let off = h * dh;
                        let pbase = (b * heads + h) * t * t;
                        let at = |row: usize| (b * t + row) * d + off;
                        for i in 0..t {
                            let prow = &probs[pbase + i * t..pbase + i * t + i + 1];
                            let go = &gd[at(i)..at(i) + dh];
                            let mut weighted = S::zero();
                            for j in 0..=i {
                                dp[j] = dot(go, &vd[at(j)..at(j) + dh]);
                                weighted += prow[j] * dp[j];
                                let gvj = &mut gv[at(j)..at(j) + dh];
                                for (acc, &x) in gvj.iter_mut().zip(go) {
                                    *acc += prow[j] * x;
                                }
                            }
                            for j in 0..=i {
                                let ds = prow[j] * (dp[j] - weighted) * scale;
                                if ds == S::zero() {
                                    continue;
                                }
                                for c in 0..dh {
                                    gq[at(i) + c] += ds * kd[at(j) + c];
                                    gk[at(j) + c] += ds * qd[at(i) + c];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *q, Tensor::matrix(n, d, gq)?)?;
                self.accumulate(grads, *k, Tensor::matrix(n, d, gk)?)?;
                self.accumulate(grads, *v, Tensor::matrix(n, d, gv)?)?;
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let vocab = self.val(*logits).cols();
                let upstream = g.item() / S::from_usize_lossy(*count);
                let mut gl = vec![S::zero(); probs.len()];
                for (r, (grow, prow)) in gl.chunks_mut(vocab).zip(probs.chunks(vocab)).enumerate() {
                    if !mask[r] {
                        continue;
                    }
                    for c in 0..vocab {
                        grow[c] = prow[c] * upstream;
                    }
                    grow[targets[r]] -= upstream;
                }
                self.accumulate(grads, *logits, Tensor::new(self.val(*logits).shape().to_vec(), gl)?)?;
            }
            Op::NormalizeRows { x, norms } => {
                let y = &self.nodes[i].value;
                let cols = y.cols();
                let mut gx = vec![S::zero(); y.len()];
                for (r, ((grow, yrow), xrow)) in
                    g.data().chunks(cols).zip(y.data().chunks(cols)).zip(gx.chunks_mut(cols)).enumerate()
                {
                    let s = dot(grow, yrow);
                    for c in 0..cols {
                        xrow[c] = (grow[c] - yrow[c] * s) / norms[r];
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?)?;
            }
        }
        Ok(())
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(crate) fn gelu_value<S: Scalar>(x: S) -> S {
    let c = S::lit(GELU_C);
    let inner = c * (x + S::lit(0.044715) * x * x * x);
    S::lit(0.5) * x * (S::one() + inner.tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::lit(GELU_C);
    let inner = c * (x + S::lit(0.044715) * x * x * x);
    let t = inner.tanh();
    let dinner = c * (S::one() + S::lit(3.0 * 0.044715) * x * x);
    S::lit(0.5) * (S::one() + t) + S::lit(0.5) * x * (S::one() - t * t) * dinner
}

//! Minimal reverse-mode autodiff over dense f64 vectors.
//!
//! Parameters live outside the tape in a `ParamStore`; a `Tape` records the
//! forward computation of one step or one minibatch and `backward`
//! accumulates parameter gradients into a `Grads` arena. Everything is
//! sequential and order-deterministic so that identical seeds give bitwise
//! identical results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// One named parameter block: a row-major matrix (vectors have cols = 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { blocks: Vec::new() }
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> BlockId {
        assert_eq!(data.len(), rows * cols, "block {name} shape mismatch");
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn block(&self, id: BlockId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Flat copy of every parameter, block order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.blocks {
            out.extend_from_slice(&b.data);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, store holds {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for b in &mut self.blocks {
            b.data.copy_from_slice(&flat[off..off + b.rows * b.cols]);
            off += b.rows * b.cols;
        }
        Ok(())
    }
}

/// Gradient arena parallel to a `ParamStore`.
#[derive(Debug, Clone)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Grads {
            data: params.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.data {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn block(&self, id: BlockId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.data
    }

    pub fn global_norm(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales all gradients so the global L2 norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for g in &mut self.data {
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
        norm
    }
}

enum Op {
    Const,
    /// y = W x
    MatVec { w: BlockId, x: NodeId },
    /// y = x + b (bias block)
    AddParam { b: BlockId, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Slice { x: NodeId, start: usize },
    Concat(Vec<NodeId>),
    /// scalar y = w . x + b (vector block w, scalar block b)
    DotParam { w: BlockId, b: BlockId, x: NodeId },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    /// scalar y = x[idx]
    Pick { x: NodeId, idx: usize },
    /// scalar entropy of the categorical defined by logits
    EntropyFromLogits { logits: NodeId },
    /// scalar KL(old || new) between categoricals; old is a constant
    KlFromLogits { logits: NodeId, old_log_probs: Vec<f64> },
    /// y = sum_j weights[j] * items[j]
    ConvexCombine { weights: NodeId, items: Vec<NodeId> },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Min(NodeId, NodeId),
    MeanScalars(Vec<NodeId>),
    /// y = x * mask, mask constant (inverted dropout)
    MulMask { x: NodeId, mask: Vec<f64> },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    poison: Option<String>,
}

/// Dot product with four independent accumulators; fixed grouping keeps the
/// reduction order deterministic.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

#[inline]
fn axpy(out: &mut [f64], k: f64, x: &[f64]) {
    if k == 0.0 {
        return;
    }
    for (o, v) in out.iter_mut().zip(x) {
        *o += k * v;
    }
}

fn softmax_values(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

fn log_softmax_values(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&z| z - log_sum).collect()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(64),
            poison: None,
        }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Returns an error if any op produced a non-finite value.
    pub fn check(&self) -> Result<()> {
        match &self.poison {
            Some(msg) => Err(Error::numeric(msg.clone())),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        if self.poison.is_none() {
            if let Some(bad) = value.iter().find(|v| !v.is_finite()) {
                self.poison = Some(format!(
                    "non-finite value {bad} produced at node {}",
                    self.nodes.len()
                ));
            }
        }
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, values: Vec<f64>) -> NodeId {
        self.push(values, Op::Const)
    }

    pub fn matvec(&mut self, w: BlockId, x: NodeId) -> NodeId {
        let block = self.params.block(w);
        let xv = &self.nodes[x.0].value;
        assert_eq!(block.cols, xv.len(), "matvec shape mismatch on {}", block.name);
        let mut out = vec![0.0; block.rows];
        for (o, row) in out.iter_mut().zip(block.data.chunks_exact(block.cols)) {
            *o = dot(row, xv);
        }
        self.push(out, Op::MatVec { w, x })
    }

    pub fn add_param(&mut self, b: BlockId, x: NodeId) -> NodeId {
        let block = self.params.block(b);
        let xv = &self.nodes[x.0].value;
        assert_eq!(block.len(), xv.len(), "bias shape mismatch on {}", block.name);
        let out = xv.iter().zip(&block.data).map(|(a, b)| a + b).collect();
        self.push(out, Op::AddParam { b, x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v * k).collect();
        self.push(out, Op::Scale(x, k))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v.max(0.0)).collect();
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0]
            .value
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v.exp()).collect();
        self.push(out, Op::Exp(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v * v).collect();
        self.push(out, Op::Square(x))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let out = self.nodes[x.0].value[start..start + len].to_vec();
        self.push(out, Op::Slice { x, start })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Scalar score w . x + b with learnable w (vector) and b (length-1).
    pub fn dot_param(&mut self, w: BlockId, b: BlockId, x: NodeId) -> NodeId {
        let wb = self.params.block(w);
        let bb = self.params.block(b);
        let xv = &self.nodes[x.0].value;
        assert_eq!(wb.len(), xv.len(), "dot_param shape mismatch");
        assert_eq!(bb.len(), 1, "dot_param bias must be scalar");
        let out = vec![dot(&wb.data, xv) + bb.data[0]];
        self.push(out, Op::DotParam { w, b, x })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = softmax_values(&self.nodes[x.0].value);
        self.push(out, Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let out = log_softmax_values(&self.nodes[x.0].value);
        self.push(out, Op::LogSoftmax(x))
    }

    pub fn pick(&mut self, x: NodeId, idx: usize) -> NodeId {
        let out = vec![self.nodes[x.0].value[idx]];
        self.push(out, Op::Pick { x, idx })
    }

    /// Entropy of the categorical distribution given by `logits`.
    pub fn entropy_from_logits(&mut self, logits: NodeId) -> NodeId {
        let ls = log_softmax_values(&self.nodes[logits.0].value);
        let h = -ls.iter().map(|&l| l.exp() * l).sum::<f64>();
        self.push(vec![h], Op::EntropyFromLogits { logits })
    }

    /// Exact KL(old || new) where `old_logits` is a constant snapshot.
    pub fn kl_from_logits(&mut self, old_logits: &[f64], logits: NodeId) -> NodeId {
        let old_ls = log_softmax_values(old_logits);
        let new_ls = log_softmax_values(&self.nodes[logits.0].value);
        let kl = old_ls
            .iter()
            .zip(&new_ls)
            .map(|(&o, &n)| o.exp() * (o - n))
            .sum::<f64>();
        self.push(
            vec![kl],
            Op::KlFromLogits {
                logits,
                old_log_probs: old_ls,
            },
        )
    }

    /// y[k] = sum_j weights[j] * items[j][k]
    pub fn convex_combine(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        let n = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; n];
        let w = self.nodes[weights.0].value.clone();
        assert_eq!(w.len(), items.len(), "one weight per item");
        for (j, item) in items.iter().enumerate() {
            axpy(&mut out, w[j], &self.nodes[item.0].value);
        }
        self.push(
            out,
            Op::ConvexCombine {
                weights,
                items: items.to_vec(),
            },
        )
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.nodes[x.0]
            .value
            .iter()
            .map(|v| v.clamp(lo, hi))
            .collect();
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x.min(*y))
            .collect();
        self.push(out, Op::Min(a, b))
    }

    pub fn mean_scalars(&mut self, xs: &[NodeId]) -> NodeId {
        let sum: f64 = xs.iter().map(|id| self.nodes[id.0].value[0]).sum();
        self.push(vec![sum / xs.len() as f64], Op::MeanScalars(xs.to_vec()))
    }

    /// Elementwise multiply by a constant mask (inverted dropout).
    pub fn mul_mask(&mut self, x: NodeId, mask: &[f64]) -> NodeId {
        let out = self.nodes[x.0]
            .value
            .iter()
            .zip(mask)
            .map(|(v, m)| v * m)
            .collect();
        self.push(
            out,
            Op::MulMask {
                x,
                mask: mask.to_vec(),
            },
        )
    }

    /// Reverse pass from scalar `loss`; parameter gradients accumulate into
    /// `grads`, which is NOT zeroed here so minibatch tapes can share it.
    pub fn backward(&self, loss: NodeId, grads: &mut Grads) -> Result<()> {
        self.check()?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape("backward root must be scalar".into()));
        }
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|_| Vec::new()).collect();
        adj[loss.0] = vec![1.0];

        for i in (0..self.nodes.len()).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let dy = std::mem::take(&mut adj[i]);
            let ensure = |adj: &mut Vec<Vec<f64>>, id: NodeId| {
                if adj[id.0].is_empty() {
                    adj[id.0] = vec![0.0; self.nodes[id.0].value.len()];
                }
            };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::MatVec { w, x } => {
                    let block = self.params.block(*w);
                    let xv = &self.nodes[x.0].value;
                    ensure(&mut adj, *x);
                    let dw = grads.block_mut(*w);
                    for (r, dyi) in dy.iter().enumerate() {
                        if *dyi != 0.0 {
                            let row = &block.data[r * block.cols..(r + 1) * block.cols];
                            axpy(&mut adj[x.0], *dyi, row);
                            axpy(&mut dw[r * block.cols..(r + 1) * block.cols], *dyi, xv);
                        }
                    }
                }
                Op::AddParam { b, x } => {
                    ensure(&mut adj, *x);
                    for (d, v) in adj[x.0].iter_mut().zip(&dy) {
                        *d += v;
                    }
                    for (g, v) in grads.block_mut(*b).iter_mut().zip(&dy) {
                        *g += v;
                    }
                }
                Op::Add(a, b) => {
                    ensure(&mut adj, *a);
                    for (d, v) in adj[a.0].iter_mut().zip(&dy) {
                        *d += v;
                    }
                    ensure(&mut adj, *b);
                    for (d, v) in adj[b.0].iter_mut().zip(&dy) {
                        *d += v;
                    }
                }
                Op::Sub(a, b) => {
                    ensure(&mut adj, *a);
                    for (d, v) in adj[a.0].iter_mut().zip(&dy) {
                        *d += v;
                    }
                    ensure(&mut adj, *b);
                    for (d, v) in adj[b.0].iter_mut().zip(&dy) {
                        *d -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    ensure(&mut adj, *a);
                    for ((d, v), bb) in adj[a.0].iter_mut().zip(&dy).zip(&bv) {
                        *d += v * bb;
                    }
                    ensure(&mut adj, *b);
                    for ((d, v), aa) in adj[b.0].iter_mut().zip(&dy).zip(&av) {
                        *d += v * aa;
                    }
                }
                Op::Scale(x, k) => {
                    ensure(&mut adj, *x);
                    for (d, v) in adj[x.0].iter_mut().zip(&dy) {
                        *d += v * k;
                    }
                }
                Op::Relu(x) => {
                    ensure(&mut adj, *x);
                    let xv = &self.nodes[x.0].value;
                    for ((d, v), inp) in adj[x.0].iter_mut().zip(&dy).zip(xv) {
                        if *inp > 0.0 {
                            *d += v;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    ensure(&mut adj, *x);
                    let yv = &self.nodes[i].value;
                    for ((d, v), y) in adj[x.0].iter_mut().zip(&dy).zip(yv) {
                        *d += v * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    ensure(&mut adj, *x);
                    let yv = &self.nodes[i].value;
                    for ((d, v), y) in adj[x.0].iter_mut().zip(&dy).zip(yv) {
                        *d += v * (1.0 - y * y);
                    }
                }
                Op::Exp(x) => {
                    ensure(&mut adj, *x);
                    let yv = &self.nodes[i].value;
                    for ((d, v), y) in adj[x.0].iter_mut().zip(&dy).zip(yv) {
                        *d += v * y;
                    }
                }
                Op::Square(x) => {
                    ensure(&mut adj, *x);
                    let xv = &self.nodes[x.0].value;
                    for ((d, v), inp) in adj[x.0].iter_mut().zip(&dy).zip(xv) {
                        *d += 2.0 * inp * v;
                    }
                }
                Op::Slice { x, start } => {
                    ensure(&mut adj, *x);
                    for (k, v) in dy.iter().enumerate() {
                        adj[x.0][start + k] += v;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        ensure(&mut adj, *p);
                        for (d, v) in adj[p.0].iter_mut().zip(&dy[off..off + len]) {
                            *d += v;
                        }
                        off += len;
                    }
                }
                Op::DotParam { w, b, x } => {
                    let dyi = dy[0];
                    let block = self.params.block(*w);
                    let xv = &self.nodes[x.0].value;
                    ensure(&mut adj, *x);
                    axpy(&mut adj[x.0], dyi, &block.data);
                    axpy(grads.block_mut(*w), dyi, xv);
                    grads.block_mut(*b)[0] += dyi;
                }
                Op::Softmax(x) => {
                    ensure(&mut adj, *x);
                    let y = &self.nodes[i].value;
                    let inner: f64 = dy.iter().zip(y).map(|(d, p)| d * p).sum();
                    for ((dx, d), p) in adj[x.0].iter_mut().zip(&dy).zip(y) {
                        *dx += p * (d - inner);
                    }
                }
                Op::LogSoftmax(x) => {
                    ensure(&mut adj, *x);
                    let ls = &self.nodes[i].value;
                    let total: f64 = dy.iter().sum();
                    for ((dx, d), l) in adj[x.0].iter_mut().zip(&dy).zip(ls) {
                        *dx += d - l.exp() * total;
                    }
                }
                Op::Pick { x, idx } => {
                    ensure(&mut adj, *x);
                    adj[x.0][*idx] += dy[0];
                }
                Op::EntropyFromLogits { logits } => {
                    ensure(&mut adj, *logits);
                    let ls = log_softmax_values(&self.nodes[logits.0].value);
                    let h = self.nodes[i].value[0];
                    for (dx, l) in adj[logits.0].iter_mut().zip(&ls) {
                        *dx += dy[0] * (-l.exp() * (l + h));
                    }
                }
                Op::KlFromLogits {
                    logits,
                    old_log_probs,
                } => {
                    ensure(&mut adj, *logits);
                    let new_p = softmax_values(&self.nodes[logits.0].value);
                    for ((dx, np), ol) in
                        adj[logits.0].iter_mut().zip(&new_p).zip(old_log_probs)
                    {
                        *dx += dy[0] * (np - ol.exp());
                    }
                }
                Op::ConvexCombine { weights, items } => {
                    let wv = self.nodes[weights.0].value.clone();
                    ensure(&mut adj, *weights);
                    for (j, item) in items.iter().enumerate() {
                        adj[weights.0][j] += dot(&dy, &self.nodes[item.0].value);
                        ensure(&mut adj, *item);
                        for (d, v) in adj[item.0].iter_mut().zip(&dy) {
                            *d += wv[j] * v;
                        }
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    ensure(&mut adj, *x);
                    let xv = &self.nodes[x.0].value;
                    for ((d, v), inp) in adj[x.0].iter_mut().zip(&dy).zip(xv) {
                        if *inp >= *lo && *inp <= *hi {
                            *d += v;
                        }
                    }
                }
                Op::Min(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    ensure(&mut adj, *a);
                    ensure(&mut adj, *b);
                    for (k, v) in dy.iter().enumerate() {
                        if av[k] <= bv[k] {
                            adj[a.0][k] += v;
                        } else {
                            adj[b.0][k] += v;
                        }
                    }
                }
                Op::MeanScalars(xs) => {
                    let share = dy[0] / xs.len() as f64;
                    for x in xs {
                        ensure(&mut adj, *x);
                        adj[x.0][0] += share;
                    }
                }
                Op::MulMask { x, mask } => {
                    ensure(&mut adj, *x);
                    for ((d, v), m) in adj[x.0].iter_mut().zip(&dy).zip(mask) {
                        *d += v * m;
                    }
                }
            }
        }
        Ok(())
    }
}

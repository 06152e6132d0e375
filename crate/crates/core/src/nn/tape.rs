use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{NnError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<Option<usize>>),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LeakyRelu(Var, f64),
    Elu(Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout(Var, Vec<f64>),
    CrossEntropy { logits: Var, label: usize, weight: f64, probs: Vec<f64> },
    BlockRowMatmul(Var, Var),
    GraphAttention(GatSaved),
}

#[derive(Debug)]
struct GatSaved {
    z: Var,
    a_src: Var,
    a_dst: Var,
    heads: usize,
    block: usize,
    slope: f64,
    // Per head, per block, block x block attention weights and raw scores.
    alpha: Vec<f64>,
    score: Vec<f64>,
    adj: Vec<bool>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    grad: Option<Vec<f64>>,
}

/// Reverse-mode recording of a forward computation.
///
/// Nodes are appended in execution order, so inputs always precede outputs and
/// the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

/// Softmax over `len` entries spaced `inner` apart; masked entries get exactly 0.
fn softmax_into(x: &[f64], mask: Option<&[bool]>, outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let live = |k: usize| mask.map_or(true, |m| m[idx(k)]);
            let mut max = f64::NEG_INFINITY;
            for k in 0..len {
                if live(k) && x[idx(k)] > max {
                    max = x[idx(k)];
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for k in 0..len {
                if live(k) {
                    let e = libm::exp(x[idx(k)] - max);
                    y[idx(k)] = e;
                    total += e;
                }
            }
            for k in 0..len {
                y[idx(k)] /= total;
            }
        }
    }
    y
}

fn matmul_raw(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * r];
    for i in 0..p {
        let crow = &mut c[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    }
    c
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: &[usize], data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad());
        let mut value = Tensor::new(shape, data).expect("derived op produced inconsistent shape");
        if requires_grad {
            value = value.with_grad();
        }
        let op = if requires_grad { op } else { Op::Leaf };
        self.push(value, op)
    }

    /// Records an input tensor. Its `requires_grad` flag decides whether
    /// gradients are accumulated for it.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Records a constant (never differentiated).
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        if tensor.requires_grad() {
            let shape = tensor.shape().to_vec();
            tensor = Tensor::new(&shape, tensor.into_data()).expect("valid tensor");
        }
        self.push(tensor, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Moves the recorded value out, with its gradient attached when present.
    pub fn take(&mut self, v: Var) -> Tensor {
        let node = &mut self.nodes[v.0];
        let mut t = core::mem::replace(&mut node.value, Tensor::scalar(0.0));
        t.set_grad(node.grad.take());
        t
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (p, q, r) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let data = matmul_raw(ta.data(), tb.data(), p, q, r);
        Ok(self.derived(&[p, r], data, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.derived(&shape, data, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.derived(&shape, data, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.derived(&shape, data, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`c` vector to every row of an `r x c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (r, c) = ta.dims2();
        if tr.numel() != c {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for (x, b) in data[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *x += b;
            }
        }
        let shape = ta.shape().to_vec();
        Ok(self.derived(&shape, data, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * factor).collect();
        let shape = self.value(a).shape().to_vec();
        self.derived(&shape, data, Op::Scale(a, factor), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(NnError::InvalidShape(ta.shape().to_vec()));
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let src = ta.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.derived(&[c, r], data, Op::Transpose(a), &[a]))
    }

    /// Concatenates 2-D tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = parts.first().ok_or(NnError::EmptyInput("concat_cols"))?;
        let rows = self.value(*first).dims2().0;
        let mut total = 0;
        for p in parts {
            let (r, c) = self.value(*p).dims2();
            if r != rows {
                return Err(mismatch("concat_cols", self.value(*first), self.value(*p)));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        Ok(self.derived(&[rows, total], data, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Stacks 2-D tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = parts.first().ok_or(NnError::EmptyInput("concat_rows"))?;
        let cols = self.value(*first).dims2().1;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            let (r, c) = t.dims2();
            if c != cols {
                return Err(mismatch("concat_rows", self.value(*first), t));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        Ok(self.derived(&[rows, cols], data, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Builds a matrix whose row `i` is row `index[i]` of `a`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, index: &[Option<usize>]) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2();
        if index.is_empty() {
            return Err(NnError::EmptyInput("gather_rows"));
        }
        let mut data = vec![0.0; index.len() * c];
        for (i, src) in index.iter().enumerate() {
            if let Some(s) = *src {
                if s >= r {
                    return Err(NnError::IndexOutOfRange { index: s, len: r });
                }
                data[i * c..(i + 1) * c].copy_from_slice(ta.row(s));
            }
        }
        Ok(self.derived(&[index.len(), c], data, Op::GatherRows(a, index.to_vec()), &[a]))
    }

    /// Columns `[start, start + width)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2();
        if width == 0 || start + width > c {
            return Err(NnError::IndexOutOfRange { index: start + width, len: c });
        }
        let mut data = Vec::with_capacity(r * width);
        for i in 0..r {
            data.extend_from_slice(&ta.row(i)[start..start + width]);
        }
        Ok(self.derived(&[r, width], data, Op::SliceCols(a, start), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.derived(&[1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.derived(&[1], vec![s], Op::Mean(a), &[a])
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, NnError> {
        self.softmax_impl(x, axis, None)
    }

    /// Softmax along the last axis where entries with `mask == false` receive
    /// probability exactly zero. A fully masked slice yields all zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var, NnError> {
        let t = self.value(x);
        if mask.len() != t.numel() {
            return Err(NnError::DataLength { shape: t.shape().to_vec(), len: mask.len() });
        }
        let axis = t.shape().len() - 1;
        self.softmax_impl(x, axis, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var, NnError> {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        if axis >= shape.len() {
            return Err(NnError::InvalidAxis { axis, rank: shape.len() });
        }
        let outer = shape[..axis].iter().product();
        let len = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        let data = softmax_into(t.data(), mask, outer, len, inner);
        Ok(self.derived(&shape, data, Op::Softmax { x, outer, len, inner }, &[x]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let data = self.value(x).data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let shape = self.value(x).shape().to_vec();
        self.derived(&shape, data, Op::LeakyRelu(x, slope), &[x])
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| if v > 0.0 { v } else { libm::expm1(v) }).collect();
        let shape = self.value(x).shape().to_vec();
        self.derived(&shape, data, Op::Elu(x), &[x])
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        let shape = self.value(x).shape().to_vec();
        self.derived(&shape, data, Op::Gelu(x), &[x])
    }

    /// Row-wise layer normalization of an `r x d` matrix with affine `gamma`, `beta` of length `d`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, NnError> {
        let tx = self.value(x);
        let (r, d) = tx.dims2();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.numel() != d {
            return Err(mismatch("layer_norm", tx, tg));
        }
        if tb.numel() != d {
            return Err(mismatch("layer_norm", tx, tb));
        }
        let mut xhat = vec![0.0; r * d];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let row = tx.row(i);
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let s = 1.0 / libm::sqrt(var + eps);
            rstd[i] = s;
            for j in 0..d {
                let h = (row[j] - mu) * s;
                xhat[i * d + j] = h;
                out[i * d + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let shape = tx.shape().to_vec();
        Ok(self.derived(&shape, out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta]))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and rescales survivors.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.value(x).shape().to_vec();
        self.derived(&shape, data, Op::Dropout(x, mask), &[x])
    }

    /// Weighted softmax cross-entropy of a single logit row against `label`.
    pub fn cross_entropy(&mut self, logits: Var, label: usize, weight: f64) -> Result<Var, NnError> {
        let t = self.value(logits);
        let c = t.numel();
        if label >= c {
            return Err(NnError::IndexOutOfRange { index: label, len: c });
        }
        let probs = softmax_into(t.data(), None, 1, c, 1);
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(t.data().iter().map(|v| libm::exp(v - max)).sum::<f64>());
        let loss = weight * (lse - t.data()[label]);
        Ok(self.derived(&[1], vec![loss], Op::CrossEntropy { logits, label, weight, probs }, &[logits]))
    }

    /// For `a: B x n` and `r: (B*n) x k`, returns the `B x k` matrix whose row `b`
    /// is `a[b] . r[b*n .. (b+1)*n]`.
    pub fn block_row_matmul(&mut self, a: Var, r: Var) -> Result<Var, NnError> {
        let (ta, tr) = (self.value(a), self.value(r));
        let (b, n) = ta.dims2();
        let (rr, k) = tr.dims2();
        if rr != b * n {
            return Err(mismatch("block_row_matmul", ta, tr));
        }
        let mut data = vec![0.0; b * k];
        for i in 0..b {
            let out = &mut data[i * k..(i + 1) * k];
            for j in 0..n {
                let w = ta.data()[i * n + j];
                if w == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(tr.row(i * n + j)) {
                    *o += w * v;
                }
            }
        }
        Ok(self.derived(&[b, k], data, Op::BlockRowMatmul(a, r), &[a, r]))
    }

    /// Multi-head graph attention over independent blocks of `block` nodes.
    ///
    /// `z` is `(B*block) x (heads*dk)` (already projected), `a_src`/`a_dst` are
    /// `heads x dk`, `adj` is `B*block*block` with `adj[b][i][j]` meaning node `i`
    /// attends to node `j`. Per head, the score is
    /// `LeakyReLU(a_src . z_i + a_dst . z_j)`, normalized over allowed `j`, and the
    /// output row is the attention-weighted sum of `z_j`. Rows with no allowed
    /// neighbor output zeros.
    pub fn graph_attention(
        &mut self,
        z: Var,
        a_src: Var,
        a_dst: Var,
        adj: &[bool],
        heads: usize,
        block: usize,
        slope: f64,
    ) -> Result<Var, NnError> {
        let tz = self.value(z);
        let (rows, width) = tz.dims2();
        if heads == 0 || width % heads != 0 || block == 0 || rows % block != 0 {
            return Err(NnError::InvalidShape(tz.shape().to_vec()));
        }
        let dk = width / heads;
        for a in [a_src, a_dst] {
            let ta = self.value(a);
            if ta.numel() != heads * dk {
                return Err(mismatch("graph_attention", tz, ta));
            }
        }
        let blocks = rows / block;
        if adj.len() != blocks * block * block {
            return Err(NnError::DataLength { shape: vec![blocks, block, block], len: adj.len() });
        }
        let zd = tz.data();
        let (asd, add) = (self.value(a_src).data(), self.value(a_dst).data());
        let bb = block * block;
        let mut alpha = vec![0.0; heads * blocks * bb];
        let mut score = vec![0.0; heads * blocks * bb];
        let mut out = vec![0.0; rows * width];
        let mut s = vec![0.0; block];
        let mut t = vec![0.0; block];
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            for b in 0..blocks {
                for i in 0..block {
                    let zi = &zd[(b * block + i) * width..][cols.clone()];
                    s[i] = zi.iter().zip(&asd[h * dk..(h + 1) * dk]).map(|(x, y)| x * y).sum();
                    t[i] = zi.iter().zip(&add[h * dk..(h + 1) * dk]).map(|(x, y)| x * y).sum();
                }
                let base = (h * blocks + b) * bb;
                for i in 0..block {
                    for j in 0..block {
                        let e = s[i] + t[j];
                        score[base + i * block + j] = e;
                    }
                }
                let lrelu: Vec<f64> = score[base..base + bb]
                    .iter()
                    .map(|&e| if e > 0.0 { e } else { slope * e })
                    .collect();
                let a = softmax_into(&lrelu, Some(&adj[b * bb..(b + 1) * bb]), block, block, 1);
                alpha[base..base + bb].copy_from_slice(&a);
                for i in 0..block {
                    let orow = (b * block + i) * width;
                    for j in 0..block {
                        let w = a[i * block + j];
                        if w == 0.0 {
                            continue;
                        }
                        let zj = (b * block + j) * width;
                        for c in cols.clone() {
                            out[orow + c] += w * zd[zj + c];
                        }
                    }
                }
            }
        }
        let saved = GatSaved { z, a_src, a_dst, heads, block, slope, alpha, score, adj: adj.to_vec() };
        Ok(self.derived(&[rows, width], out, Op::GraphAttention(saved), &[z, a_src, a_dst]))
    }

    /// Runs the reverse sweep from a scalar `loss`.
    ///
    /// Gradients are accumulated on every node that requires them. A second call
    /// on the same tape is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.backward_done {
            return Err(NnError::BackwardTwice);
        }
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(NnError::NonScalarLoss(root.shape().to_vec()));
        }
        if !root.requires_grad() {
            return Err(NnError::Detached);
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(idx);
            let node = &mut rest[0];
            let Some(g) = node.grad.as_ref() else { continue };
            backprop(before, &node.op, &node.value, g);
        }
        Ok(())
    }
}

fn needs(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].value.requires_grad()
}

fn grad_slot(nodes: &mut [Node], v: Var) -> &mut Vec<f64> {
    let len = nodes[v.0].value.numel();
    accumulate(&mut nodes[v.0].grad, len)
}

fn backprop(nodes: &mut [Node], op: &Op, out: &Tensor, g: &[f64]) {
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (p, q) = nodes[a.0].value.dims2();
            let r = nodes[b.0].value.dims2().1;
            if needs(nodes, *a) {
                // dA = dC . B^T
                let bd = nodes[b.0].value.data().to_vec();
                let ga = grad_slot(nodes, *a);
                for i in 0..p {
                    for k in 0..q {
                        let mut acc = 0.0;
                        for j in 0..r {
                            acc += g[i * r + j] * bd[k * r + j];
                        }
                        ga[i * q + k] += acc;
                    }
                }
            }
            if needs(nodes, *b) {
                // dB = A^T . dC
                let ad = nodes[a.0].value.data().to_vec();
                let gb = grad_slot(nodes, *b);
                for i in 0..p {
                    for k in 0..q {
                        let aik = ad[i * q + k];
                        if aik == 0.0 {
                            continue;
                        }
                        for j in 0..r {
                            gb[k * r + j] += aik * g[i * r + j];
                        }
                    }
                }
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if needs(nodes, *a) {
                for (x, d) in grad_slot(nodes, *a).iter_mut().zip(g) {
                    *x += d;
                }
            }
            if needs(nodes, *b) {
                for (x, d) in grad_slot(nodes, *b).iter_mut().zip(g) {
                    *x += sign * d;
                }
            }
        }
        Op::Mul(a, b) => {
            if needs(nodes, *a) {
                let bd = nodes[b.0].value.data().to_vec();
                for ((x, d), y) in grad_slot(nodes, *a).iter_mut().zip(g).zip(&bd) {
                    *x += d * y;
                }
            }
            if needs(nodes, *b) {
                let ad = nodes[a.0].value.data().to_vec();
                for ((x, d), y) in grad_slot(nodes, *b).iter_mut().zip(g).zip(&ad) {
                    *x += d * y;
                }
            }
        }
        Op::AddRow(a, row) => {
            if needs(nodes, *a) {
                for (x, d) in grad_slot(nodes, *a).iter_mut().zip(g) {
                    *x += d;
                }
            }
            if needs(nodes, *row) {
                let c = nodes[row.0].value.numel();
                let gr = grad_slot(nodes, *row);
                for (i, d) in g.iter().enumerate() {
                    gr[i % c] += d;
                }
            }
        }
        Op::Scale(a, f) => {
            for (x, d) in grad_slot(nodes, *a).iter_mut().zip(g) {
                *x += f * d;
            }
        }
        Op::Transpose(a) => {
            let (r, c) = nodes[a.0].value.dims2();
            let ga = grad_slot(nodes, *a);
            for i in 0..r {
                for j in 0..c {
                    ga[i * c + j] += g[j * r + i];
                }
            }
        }
        Op::ConcatCols(parts) => {
            let (rows, total) = out.dims2();
            let mut offset = 0;
            for p in parts {
                let c = nodes[p.0].value.dims2().1;
                if needs(nodes, *p) {
                    let gp = grad_slot(nodes, *p);
                    for i in 0..rows {
                        for j in 0..c {
                            gp[i * c + j] += g[i * total + offset + j];
                        }
                    }
                }
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = nodes[p.0].value.numel();
                if needs(nodes, *p) {
                    for (x, d) in grad_slot(nodes, *p).iter_mut().zip(&g[offset..offset + n]) {
                        *x += d;
                    }
                }
                offset += n;
            }
        }
        Op::GatherRows(a, index) => {
            let c = out.dims2().1;
            let ga = grad_slot(nodes, *a);
            for (i, src) in index.iter().enumerate() {
                if let Some(s) = *src {
                    for j in 0..c {
                        ga[s * c + j] += g[i * c + j];
                    }
                }
            }
        }
        Op::SliceCols(a, start) => {
            let (r, w) = out.dims2();
            let c = nodes[a.0].value.dims2().1;
            let ga = grad_slot(nodes, *a);
            for i in 0..r {
                for j in 0..w {
                    ga[i * c + start + j] += g[i * w + j];
                }
            }
        }
        Op::Sum(a) => {
            for x in grad_slot(nodes, *a).iter_mut() {
                *x += g[0];
            }
        }
        Op::Mean(a) => {
            let n = nodes[a.0].value.numel() as f64;
            for x in grad_slot(nodes, *a).iter_mut() {
                *x += g[0] / n;
            }
        }
        Op::Softmax { x, outer, len, inner } => {
            let y = out.data();
            let gx = grad_slot(nodes, *x);
            for o in 0..*outer {
                for i in 0..*inner {
                    let idx = |k: usize| (o * len + k) * inner + i;
                    let dot: f64 = (0..*len).map(|k| y[idx(k)] * g[idx(k)]).sum();
                    for k in 0..*len {
                        gx[idx(k)] += y[idx(k)] * (g[idx(k)] - dot);
                    }
                }
            }
        }
        Op::LeakyRelu(x, slope) => {
            let xd = nodes[x.0].value.data().to_vec();
            for ((gx, d), v) in grad_slot(nodes, *x).iter_mut().zip(g).zip(&xd) {
                *gx += if *v > 0.0 { *d } else { slope * d };
            }
        }
        Op::Elu(x) => {
            let xd = nodes[x.0].value.data().to_vec();
            for ((gx, d), v) in grad_slot(nodes, *x).iter_mut().zip(g).zip(&xd) {
                *gx += if *v > 0.0 { *d } else { d * libm::exp(*v) };
            }
        }
        Op::Gelu(x) => {
            let xd = nodes[x.0].value.data().to_vec();
            for ((gx, d), v) in grad_slot(nodes, *x).iter_mut().zip(g).zip(&xd) {
                *gx += d * gelu_grad(*v);
            }
        }
        Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
            let (r, d) = out.dims2();
            let gam = nodes[gamma.0].value.data().to_vec();
            if needs(nodes, *x) {
                let gx = grad_slot(nodes, *x);
                for i in 0..r {
                    let dxhat: Vec<f64> = (0..d).map(|j| g[i * d + j] * gam[j]).collect();
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = (0..d).map(|j| dxhat[j] * xhat[i * d + j]).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx[i * d + j] += rstd[i] * (dxhat[j] - m1 - xhat[i * d + j] * m2);
                    }
                }
            }
            if needs(nodes, *gamma) {
                let gg = grad_slot(nodes, *gamma);
                for i in 0..r {
                    for j in 0..d {
                        gg[j] += g[i * d + j] * xhat[i * d + j];
                    }
                }
            }
            if needs(nodes, *beta) {
                let gb = grad_slot(nodes, *beta);
                for i in 0..r {
                    for j in 0..d {
                        gb[j] += g[i * d + j];
                    }
                }
            }
        }
        Op::Dropout(x, mask) => {
            for ((gx, d), m) in grad_slot(nodes, *x).iter_mut().zip(g).zip(mask) {
                *gx += d * m;
            }
        }
        Op::CrossEntropy { logits, label, weight, probs } => {
            let gl = grad_slot(nodes, *logits);
            for (k, p) in probs.iter().enumerate() {
                let target = if k == *label { 1.0 } else { 0.0 };
                gl[k] += g[0] * weight * (p - target);
            }
        }
        Op::BlockRowMatmul(a, r) => {
            let (b, n) = nodes[a.0].value.dims2();
            let k = out.dims2().1;
            if needs(nodes, *a) {
                let rd = nodes[r.0].value.data().to_vec();
                let ga = grad_slot(nodes, *a);
                for i in 0..b {
                    for j in 0..n {
                        let row = &rd[(i * n + j) * k..(i * n + j + 1) * k];
                        ga[i * n + j] += row.iter().zip(&g[i * k..(i + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            if needs(nodes, *r) {
                let ad = nodes[a.0].value.data().to_vec();
                let gr = grad_slot(nodes, *r);
                for i in 0..b {
                    for j in 0..n {
                        let w = ad[i * n + j];
                        for c in 0..k {
                            gr[(i * n + j) * k + c] += w * g[i * k + c];
                        }
                    }
                }
            }
        }
        Op::GraphAttention(s) => gat_backward(nodes, s, g),
    }
}

fn gat_backward(nodes: &mut [Node], s: &GatSaved, g: &[f64]) {
    let zd = nodes[s.z.0].value.data().to_vec();
    let asd = nodes[s.a_src.0].value.data().to_vec();
    let add = nodes[s.a_dst.0].value.data().to_vec();
    let (rows, width) = nodes[s.z.0].value.dims2();
    let (heads, block) = (s.heads, s.block);
    let dk = width / heads;
    let blocks = rows / block;
    let bb = block * block;
    let mut gz = vec![0.0; rows * width];
    let mut ga_src = vec![0.0; heads * dk];
    let mut ga_dst = vec![0.0; heads * dk];
    let mut dalpha = vec![0.0; bb];
    let mut de = vec![0.0; bb];
    for h in 0..heads {
        let c0 = h * dk;
        for b in 0..blocks {
            let base = (h * blocks + b) * bb;
            let alpha = &s.alpha[base..base + bb];
            let adj = &s.adj[b * bb..(b + 1) * bb];
            let node = |i: usize| (b * block + i) * width + c0;
            for i in 0..block {
                for j in 0..block {
                    let w = alpha[i * block + j];
                    dalpha[i * block + j] = if adj[i * block + j] {
                        (0..dk).map(|c| g[node(i) + c] * zd[node(j) + c]).sum()
                    } else {
                        0.0
                    };
                    if w != 0.0 {
                        for c in 0..dk {
                            gz[node(j) + c] += w * g[node(i) + c];
                        }
                    }
                }
            }
            for i in 0..block {
                let row = i * block..(i + 1) * block;
                let dot: f64 = row.clone().map(|k| alpha[k] * dalpha[k]).sum();
                for k in row {
                    let dl = alpha[k] * (dalpha[k] - dot);
                    de[k] = if s.score[base + k] > 0.0 { dl } else { s.slope * dl };
                }
            }
            for i in 0..block {
                let ds_i: f64 = (0..block).map(|j| de[i * block + j]).sum();
                let dt_i: f64 = (0..block).map(|r| de[r * block + i]).sum();
                for c in 0..dk {
                    gz[node(i) + c] += ds_i * asd[c0 + c] + dt_i * add[c0 + c];
                    ga_src[c0 + c] += ds_i * zd[node(i) + c];
                    ga_dst[c0 + c] += dt_i * zd[node(i) + c];
                }
            }
        }
    }
    for (v, grad) in [(s.z, gz), (s.a_src, ga_src), (s.a_dst, ga_dst)] {
        if needs(nodes, v) {
            for (x, d) in grad_slot(nodes, v).iter_mut().zip(&grad) {
                *x += d;
            }
        }
    }
}

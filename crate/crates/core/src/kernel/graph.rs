//! Reverse-mode tape over dense matrices.
//!
//! Every value is a row-major matrix; vectors are 1×n rows. The tape is
//! append-only and rebuilt for each example or batch.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernelError, ParamStore};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Row-major matrix value.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix {rows}x{cols} with {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    SumRows(Var),
    Sum(Var),
    Gather(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    LstmCell(Var, Var),
    CrossEntropy(Var, usize),
    WeightedBce(Var, Vec<bool>, f64),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    /// Activations kept for the backward pass (softmax probabilities, gate values).
    saved: Vec<f64>,
}

/// Tape of recorded operations.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Graph in inference mode: dropout is the identity.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: HashMap::new(), dropout: None, backward_done: false }
    }

    /// Graph that applies inverted dropout at `rate` using a seeded stream.
    pub fn with_dropout(rate: f64, seed: u64) -> Self {
        let mut g = Self::new();
        if rate > 0.0 {
            g.dropout = Some((rate, ChaCha8Rng::seed_from_u64(seed)));
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears the tape so the graph can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.backward_done = false;
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let m = &self.nodes[v.0].value;
        (m.rows, m.cols)
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.push_saved(value, op, Vec::new())
    }

    fn push_saved(&mut self, value: Mat, op: Op, saved: Vec<f64>) -> Var {
        self.nodes.push(Node { value, op, saved });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Loads a parameter from the store; repeated loads share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, KernelError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store.require(name)?;
        let (r, c) = t.matrix_dims();
        let v = self.push(Mat::new(r, c, t.data().to_vec()), Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.rows {
            return Err(mismatch("matmul", x, y));
        }
        let out = mm(&x.data, x.rows, x.cols, &y.data, y.cols);
        let m = Mat::new(x.rows, y.cols, out);
        Ok(self.push(m, Op::MatMul(a, b)))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.cols {
            return Err(mismatch("matmul_nt", x, y));
        }
        let out = mm_nt(&x.data, x.rows, x.cols, &y.data, y.rows);
        let m = Mat::new(x.rows, y.rows, out);
        Ok(self.push(m, Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = Mat::new(x.cols, x.rows, transpose(&x.data, x.rows, x.cols));
        self.push(m, Op::Transpose(a))
    }

    /// Elementwise sum of equal shapes, or a broadcast row added to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows == y.rows && x.cols == y.cols {
            let data = x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect();
            let m = Mat::new(x.rows, x.cols, data);
            Ok(self.push(m, Op::Add(a, b)))
        } else if y.rows == 1 && x.cols == y.cols {
            let mut data = x.data.clone();
            for row in data.chunks_mut(x.cols) {
                row.iter_mut().zip(&y.data).for_each(|(p, q)| *p += q);
            }
            let m = Mat::new(x.rows, x.cols, data);
            Ok(self.push(m, Op::AddRow(a, b)))
        } else {
            Err(mismatch("add", x, y))
        }
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows != y.rows || x.cols != y.cols {
            return Err(mismatch("mul", x, y));
        }
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let m = Mat::new(x.rows, x.cols, data);
        Ok(self.push(m, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let x = self.value(a);
        let m = Mat::new(x.rows, x.cols, x.data.iter().map(|v| v * k).collect());
        self.push(m, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = Mat::new(x.rows, x.cols, x.data.iter().map(|v| v.tanh()).collect());
        self.push(m, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = Mat::new(x.rows, x.cols, x.data.iter().map(|&v| sigmoid(v)).collect());
        self.push(m, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, KernelError> {
        let x = self.value(a);
        let out = softmax_rows(x, None)?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// m×n → 1×n column sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = vec![0.0; x.cols];
        for row in x.data.chunks(x.cols) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        self.push(Mat::row_vec(out), Op::SumRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Mat::row_vec(vec![s]), Op::Sum(a))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, KernelError> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows) {
            return Err(KernelError::Shape(format!("row {bad} out of range for {} rows", x.rows)));
        }
        let mut data = Vec::with_capacity(idx.len() * x.cols);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let m = Mat::new(idx.len(), x.cols, data);
        Ok(self.push(m, Op::Gather(a, idx.to_vec())))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var, KernelError> {
        self.gather_rows(a, &[i])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, KernelError> {
        let x = self.value(a);
        if start + len > x.cols || len == 0 {
            return Err(KernelError::Shape(format!(
                "column slice {start}..{} of {} columns",
                start + len,
                x.cols
            )));
        }
        let mut data = Vec::with_capacity(x.rows * len);
        for row in x.data.chunks(x.cols) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let m = Mat::new(x.rows, len, data);
        Ok(self.push(m, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, KernelError> {
        let rows = self.value(parts[0]).rows;
        if parts.iter().any(|&p| self.value(p).rows != rows) {
            return Err(KernelError::Shape("concat_cols row mismatch".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Mat::new(rows, cols, data), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, KernelError> {
        let cols = self.value(parts[0]).cols;
        if parts.iter().any(|&p| self.value(p).cols != cols) {
            return Err(KernelError::Shape("concat_rows column mismatch".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let rows = data.len() / cols;
        Ok(self.push(Mat::new(rows, cols, data), Op::ConcatRows(parts.to_vec())))
    }

    /// Fused LSTM gate nonlinearity. `gates` is 1×4h pre-activations ordered
    /// (input, forget, candidate, output); returns 1×2h holding [h | c].
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Result<Var, KernelError> {
        let (g, c0) = (self.value(gates), self.value(c_prev));
        let h = c0.cols;
        if g.rows != 1 || c0.rows != 1 || g.cols != 4 * h {
            return Err(mismatch("lstm_cell", g, c0));
        }
        // saved layout: i, f, g, o, tanh(c)
        let mut saved = vec![0.0; 5 * h];
        let mut out = vec![0.0; 2 * h];
        for j in 0..h {
            let i = sigmoid(g.data[j]);
            let f = sigmoid(g.data[h + j]);
            let cand = g.data[2 * h + j].tanh();
            let o = sigmoid(g.data[3 * h + j]);
            let c = f * c0.data[j] + i * cand;
            let tc = c.tanh();
            out[j] = o * tc;
            out[h + j] = c;
            saved[j] = i;
            saved[h + j] = f;
            saved[2 * h + j] = cand;
            saved[3 * h + j] = o;
            saved[4 * h + j] = tc;
        }
        Ok(self.push_saved(Mat::row_vec(out), Op::LstmCell(gates, c_prev), saved))
    }

    /// −log softmax(logits)[target] for a 1×K row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, KernelError> {
        let x = self.value(logits);
        if x.rows != 1 {
            return Err(KernelError::Shape("cross_entropy expects a row vector".into()));
        }
        if target >= x.cols {
            return Err(KernelError::TargetOutOfRange { target, classes: x.cols });
        }
        let probs = softmax_rows(x, None)?.data;
        let lse = log_sum_exp(&x.data);
        let loss = lse - x.data[target];
        Ok(self.push_saved(Mat::row_vec(vec![loss]), Op::CrossEntropy(logits, target), probs))
    }

    /// Mean over entries of the weighted binary cross-entropy of sigmoid(logits);
    /// positive targets are scaled by `pos_weight`.
    pub fn weighted_bce(&mut self, logits: Var, targets: &[bool], pos_weight: f64) -> Result<Var, KernelError> {
        let x = self.value(logits);
        if x.data.len() != targets.len() {
            return Err(KernelError::Shape(format!(
                "bce over {} logits with {} targets",
                x.data.len(),
                targets.len()
            )));
        }
        let n = targets.len() as f64;
        let loss: f64 = x
            .data
            .iter()
            .zip(targets)
            .map(|(&z, &y)| if y { pos_weight * softplus(-z) } else { softplus(z) })
            .sum::<f64>()
            / n;
        Ok(self.push(Mat::row_vec(vec![loss]), Op::WeightedBce(logits, targets.to_vec(), pos_weight)))
    }

    /// Inverted dropout; identity in inference mode or at rate 0.
    pub fn dropout(&mut self, a: Var) -> Result<Var, KernelError> {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return Ok(a);
        };
        let keep = 1.0 - *rate;
        let x = &self.nodes[a.0].value;
        let mask: Vec<f64> = (0..x.data.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.constant(Mat::new(x.rows, x.cols, mask));
        self.mul(a, m)
    }

    /// Runs reverse accumulation from a scalar node and adds the resulting
    /// gradients into `store`. Trainable tensors the loss does not reach end
    /// with a zero gradient.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), KernelError> {
        if self.backward_done {
            return Err(KernelError::BackwardTwice);
        }
        let lv = self.value(loss);
        if lv.rows != 1 || lv.cols != 1 {
            return Err(KernelError::Shape("backward requires a scalar loss".into()));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => {
                    if let Some(t) = store.get_mut(name) {
                        if t.requires_grad {
                            t.accumulate_grad(&dy);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = mm_nt(&dy, x.rows, y.cols, &y.data, y.rows);
                    let db = mm_tn(&x.data, x.rows, x.cols, &dy, y.cols);
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::MatMulNT(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = mm(&dy, x.rows, y.rows, &y.data, y.cols);
                    let db = mm_tn(&dy, x.rows, y.rows, &x.data, x.cols);
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Transpose(a) => {
                    let v = &node.value;
                    acc(&mut grads, *a, &transpose(&dy, v.rows, v.cols));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &dy);
                    acc(&mut grads, *b, &dy);
                }
                Op::AddRow(a, b) => {
                    let cols = node.value.cols;
                    let mut db = vec![0.0; cols];
                    for row in dy.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    acc(&mut grads, *a, &dy);
                    acc(&mut grads, *b, &db);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                    let da: Vec<f64> = dy.iter().zip(y).map(|(d, v)| d * v).collect();
                    let db: Vec<f64> = dy.iter().zip(x).map(|(d, v)| d * v).collect();
                    acc(&mut grads, *a, &da);
                    acc(&mut grads, *b, &db);
                }
                Op::Scale(a, k) => {
                    let da: Vec<f64> = dy.iter().map(|d| d * k).collect();
                    acc(&mut grads, *a, &da);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> =
                        dy.iter().zip(&node.value.data).map(|(d, t)| d * (1.0 - t * t)).collect();
                    acc(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> =
                        dy.iter().zip(&node.value.data).map(|(d, s)| d * s * (1.0 - s)).collect();
                    acc(&mut grads, *a, &da);
                }
                Op::SoftmaxRows(a) => {
                    let cols = node.value.cols;
                    let mut da = vec![0.0; dy.len()];
                    for ((out, g), p) in
                        da.chunks_mut(cols).zip(dy.chunks(cols)).zip(node.value.data.chunks(cols))
                    {
                        let dot: f64 = g.iter().zip(p).map(|(u, v)| u * v).sum();
                        for j in 0..cols {
                            out[j] = p[j] * (g[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::SumRows(a) => {
                    let rows = self.nodes[a.0].value.rows;
                    let da: Vec<f64> = (0..rows).flat_map(|_| dy.iter().copied()).collect();
                    acc(&mut grads, *a, &da);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.data.len();
                    acc(&mut grads, *a, &vec![dy[0]; n]);
                }
                Op::Gather(a, idx) => {
                    let x = &self.nodes[a.0].value;
                    let mut da = vec![0.0; x.data.len()];
                    for (k, &r) in idx.iter().enumerate() {
                        let src = &dy[k * x.cols..(k + 1) * x.cols];
                        da[r * x.cols..(r + 1) * x.cols]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::SliceCols(a, start) => {
                    let x = &self.nodes[a.0].value;
                    let len = node.value.cols;
                    let mut da = vec![0.0; x.data.len()];
                    for r in 0..x.rows {
                        da[r * x.cols + start..r * x.cols + start + len]
                            .copy_from_slice(&dy[r * len..(r + 1) * len]);
                    }
                    acc(&mut grads, *a, &da);
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows;
                    let total = node.value.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p.0].value.cols;
                        let mut dp = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            dp.extend_from_slice(&dy[r * total + offset..r * total + offset + pc]);
                        }
                        acc(&mut grads, p, &dp);
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.data.len();
                        acc(&mut grads, p, &dy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::LstmCell(gates, c_prev) => {
                    let h = node.value.cols / 2;
                    let s = &node.saved;
                    let c0 = &self.nodes[c_prev.0].value.data;
                    let mut dg = vec![0.0; 4 * h];
                    let mut dc0 = vec![0.0; h];
                    for j in 0..h {
                        let (i, f, cand, o, tc) = (s[j], s[h + j], s[2 * h + j], s[3 * h + j], s[4 * h + j]);
                        let dh = dy[j];
                        let dc = dy[h + j] + dh * o * (1.0 - tc * tc);
                        dg[j] = dc * cand * i * (1.0 - i);
                        dg[h + j] = dc * c0[j] * f * (1.0 - f);
                        dg[2 * h + j] = dc * i * (1.0 - cand * cand);
                        dg[3 * h + j] = dh * tc * o * (1.0 - o);
                        dc0[j] = dc * f;
                    }
                    acc(&mut grads, *gates, &dg);
                    acc(&mut grads, *c_prev, &dc0);
                }
                Op::CrossEntropy(a, target) => {
                    let mut da: Vec<f64> = node.saved.iter().map(|p| p * dy[0]).collect();
                    da[*target] -= dy[0];
                    acc(&mut grads, *a, &da);
                }
                Op::WeightedBce(a, targets, w) => {
                    let x = &self.nodes[a.0].value.data;
                    let n = targets.len() as f64;
                    let da: Vec<f64> = x
                        .iter()
                        .zip(targets)
                        .map(|(&z, &y)| {
                            let s = sigmoid(z);
                            let g = if y { -w * (1.0 - s) } else { s };
                            g * dy[0] / n
                        })
                        .collect();
                    acc(&mut grads, *a, &da);
                }
            }
        }

        for (_, t) in store.iter_mut() {
            if t.requires_grad {
                t.ensure_grad();
            }
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(buf) => buf.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn mismatch(op: &str, a: &Mat, b: &Mat) -> KernelError {
    KernelError::Shape(format!("{op}: {}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction. Entries whose mask is false are
/// excluded and come out as exactly 0.
pub fn softmax_rows(m: &Mat, mask: Option<&[bool]>) -> Result<Mat, KernelError> {
    if let Some(mask) = mask {
        if mask.len() != m.data.len() {
            return Err(KernelError::Shape("softmax mask shape differs from input".into()));
        }
    }
    let keep = |k: usize| mask.map_or(true, |mk| mk[k]);
    let mut out = vec![0.0; m.data.len()];
    for r in 0..m.rows {
        let base = r * m.cols;
        let mut max = f64::NEG_INFINITY;
        for c in 0..m.cols {
            if keep(base + c) {
                max = max.max(m.data[base + c]);
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(KernelError::EmptySoftmaxRow);
        }
        let mut total = 0.0;
        for c in 0..m.cols {
            if keep(base + c) {
                let e = (m.data[base + c] - max).exp();
                out[base + c] = e;
                total += e;
            }
        }
        out[base..base + m.cols].iter_mut().for_each(|v| *v /= total);
    }
    Ok(Mat::new(m.rows, m.cols, out))
}

/// a (m×k) · b (k×n)
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            orow.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

/// a (m×k) · bᵀ where b is n×k
fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// aᵀ · b where a is k×m and b is k×n
fn mm_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            out[i * n..(i + 1) * n].iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

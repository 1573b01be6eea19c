//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably, so one store can back any
//! number of graphs built concurrently (one per training example). Parameter
//! leaves never copy their values onto the tape.

use std::sync::Arc;

use super::matrix::{gemm, Matrix};
use super::params::{Gradients, ParamId, ParamStore};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    Softmax(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SumRows(Var),
    SumCols(Var),
    SumAll(Var),
    Conv1d { input: Var, weight: Var, kernel: usize, stride: usize, padding: usize, columns: Matrix },
    MaxPool1d { input: Var, argmax: Vec<usize> },
    LayerNorm { input: Var, gain: Var, bias: Var, normalized: Matrix, inv_std: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Matrix },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Boolean mask for [`Graph::masked_softmax_rows`]; `true` marks an allowed entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Arc<Vec<bool>>,
}

impl AttentionMask {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let allowed = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self { rows, cols, allowed: Arc::new(allowed) }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::with_capacity(256) }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (rows, cols) = self.shape(a);
        assert_eq!(self.shape(row), (1, cols), "add_row: bias must be 1x{cols}");
        let bias = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        for r in 0..rows {
            v.row_mut(r).iter_mut().zip(&bias).for_each(|(x, b)| *x += b);
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Adds a `rows × 1` column to every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let (rows, _) = self.shape(a);
        assert_eq!(self.shape(col), (rows, 1), "add_col: bias must be {rows}x1");
        let bias = self.value(col).data().to_vec();
        let mut v = self.value(a).clone();
        for (r, b) in bias.iter().enumerate() {
            v.row_mut(r).iter_mut().for_each(|x| *x += b);
        }
        self.push(v, Op::AddCol(a, col))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r), None);
        }
        self.push(v, Op::Softmax(a))
    }

    /// Row-wise softmax over the entries allowed by `mask`; disallowed entries are exactly zero.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &AttentionMask) -> Var {
        assert_eq!(self.shape(a), mask.shape(), "mask shape mismatch");
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let allowed = &mask.allowed[r * mask.cols..(r + 1) * mask.cols];
            softmax_in_place(v.row_mut(r), Some(allowed));
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut v = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols: row mismatch");
            for r in 0..rows {
                v.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows: column mismatch");
            data.extend_from_slice(m.data());
        }
        let rows = data.len() / cols.max(1);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols(), "slice_cols out of range");
        let v = Matrix::from_fn(m.rows(), len, |r, c| m.get(r, start + c));
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows(), "slice_rows out of range");
        let v = Matrix::from_vec(len, m.cols(), m.data()[start * m.cols()..(start + len) * m.cols()].to_vec());
        self.push(v, Op::SliceRows(a, start))
    }

    /// Stacks `table[indices[i]]` as row `i`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let m = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * m.cols());
        for &i in indices {
            data.extend_from_slice(m.row(i));
        }
        let v = Matrix::from_vec(indices.len(), m.cols(), data);
        self.push(v, Op::GatherRows(table, indices.to_vec()))
    }

    /// Column sums as a `1 × cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            out.iter_mut().zip(m.row(r)).for_each(|(o, x)| *o += x);
        }
        self.push(Matrix::row_vector(out), Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let rows = self.shape(a).0;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / rows as f64)
    }

    /// Row sums as a `rows × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let out: Vec<f64> = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let rows = out.len();
        self.push(Matrix::from_vec(rows, 1, out), Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::SumAll(a))
    }

    /// 1D convolution of a `channels_in × length` map.
    ///
    /// `weight` is `channels_out × (channels_in · kernel)`, laid out channel-major
    /// then tap. Zero padding of `padding` samples on both sides.
    pub fn conv1d(&mut self, input: Var, weight: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let x = self.value(input);
        let w = self.value(weight);
        let (c_in, len) = x.shape();
        assert_eq!(w.cols(), c_in * kernel, "conv1d: weight expects {} inputs, got {}x{kernel}", w.cols(), c_in);
        let out_len = conv_out_len(len, kernel, stride, padding);
        let columns = im2col(x, kernel, stride, padding, out_len);
        let mut y = Matrix::zeros(w.rows(), out_len);
        gemm(w, false, &columns, false, &mut y, 0.0);
        self.push(y, Op::Conv1d { input, weight, kernel, stride, padding, columns })
    }

    /// Max pooling along the temporal axis, padding treated as `-inf`.
    pub fn max_pool1d(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let x = self.value(input);
        let (channels, len) = x.shape();
        let out_len = conv_out_len(len, kernel, stride, padding);
        let mut y = Matrix::zeros(channels, out_len);
        let mut argmax = vec![0usize; channels * out_len];
        for c in 0..channels {
            let row = x.row(c);
            for t in 0..out_len {
                let start = (t * stride) as isize - padding as isize;
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for j in 0..kernel as isize {
                    let i = start + j;
                    if i >= 0 && (i as usize) < len && row[i as usize] > best {
                        best = row[i as usize];
                        best_i = i as usize;
                    }
                }
                // A window always overlaps the signal when padding < kernel.
                y.set(c, t, best);
                argmax[c * out_len + t] = best_i;
            }
        }
        self.push(y, Op::MaxPool1d { input, argmax })
    }

    /// Per-row layer normalization with learned `1 × cols` gain and bias.
    pub fn layer_norm_rows(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let x = self.value(input);
        let (rows, cols) = x.shape();
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        let mut y = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let n = (row[c] - mean) * is;
                normalized.set(r, c, n);
                y.set(r, c, n * g[c] + b[c]);
            }
        }
        self.push(y, Op::LayerNorm { input, gain, bias, normalized, inv_std })
    }

    /// Summed cross-entropy of row-wise softmax against `targets`; `None` rows are skipped.
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), targets.len(), "cross_entropy: one target per row");
        let mut probs = z.clone();
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            if let Some(t) = t {
                loss += log_sum - row[*t];
            }
            row.iter_mut().for_each(|v| *v = (*v - log_sum).exp());
        }
        self.push(Matrix::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), probs })
    }

    /// Gradients of the scalar `root` with respect to every parameter and every node.
    pub fn backward(&self, root: Var) -> Backprop {
        assert_eq!(self.shape(root), (1, 1), "backward root must be a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));
        let mut params = Gradients::new(self.params.len());

        for i in (0..=root.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => params.accumulate(*id, &dy, 1.0),
                Op::MatMul(a, b) => {
                    let da = dy.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&dy);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    // y = a bᵀ: da = dy b, db = dyᵀ a
                    let da = dy.matmul(self.value(*b));
                    let db = dy.t_matmul(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, dy.map(|x| -x));
                    acc(&mut grads, *a, dy.clone());
                }
                Op::Mul(a, b) => {
                    let da = dy.zip_map(self.value(*b), |g, y| g * y);
                    let db = dy.zip_map(self.value(*a), |g, x| g * x);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::AddRow(a, row) => {
                    let mut db = vec![0.0; dy.cols()];
                    for r in 0..dy.rows() {
                        db.iter_mut().zip(dy.row(r)).for_each(|(o, g)| *o += g);
                    }
                    acc(&mut grads, *row, Matrix::row_vector(db));
                    acc(&mut grads, *a, dy.clone());
                }
                Op::AddCol(a, col) => {
                    let db: Vec<f64> = (0..dy.rows()).map(|r| dy.row(r).iter().sum()).collect();
                    acc(&mut grads, *col, Matrix::from_vec(dy.rows(), 1, db));
                    acc(&mut grads, *a, dy.clone());
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, dy.map(|g| g * s));
                }
                Op::AddScalar(a) => acc(&mut grads, *a, dy.clone()),
                Op::Relu(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    acc(&mut grads, *a, dy.zip_map(y, |g, y| if y > 0.0 { g } else { 0.0 }));
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    acc(&mut grads, *a, dy.zip_map(y, |g, y| g * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    acc(&mut grads, *a, dy.zip_map(y, |g, y| g * y * (1.0 - y)));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, dy.zip_map(x, |g, x| 2.0 * g * x));
                }
                Op::Softmax(a) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = dy.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        da.row_mut(r).iter_mut().enumerate().for_each(|(c, o)| *o = yr[c] * (gr[c] - dot));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Transpose(a) => acc(&mut grads, *a, dy.transpose()),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let part = Matrix::from_fn(dy.rows(), w, |r, c| dy.get(r, offset + c));
                        acc(&mut grads, p, part);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        let cols = dy.cols();
                        let part = Matrix::from_vec(h, cols, dy.data()[offset * cols..(offset + h) * cols].to_vec());
                        acc(&mut grads, p, part);
                        offset += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        da.row_mut(r)[*start..*start + dy.cols()].copy_from_slice(dy.row(r));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    da.data_mut()[start * cols..(start + dy.rows()) * cols].copy_from_slice(dy.data());
                    acc(&mut grads, *a, da);
                }
                Op::GatherRows(table, indices) => {
                    let (rows, cols) = self.shape(*table);
                    let mut dt = Matrix::zeros(rows, cols);
                    for (r, &idx) in indices.iter().enumerate() {
                        dt.row_mut(idx).iter_mut().zip(dy.row(r)).for_each(|(o, g)| *o += g);
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::SumRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let da = Matrix::from_fn(rows, cols, |_, c| dy.get(0, c));
                    acc(&mut grads, *a, da);
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let da = Matrix::from_fn(rows, cols, |r, _| dy.get(r, 0));
                    acc(&mut grads, *a, da);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(rows, cols, dy.get(0, 0)));
                }
                Op::Conv1d { input, weight, kernel, stride, padding, columns } => {
                    let mut dw = Matrix::zeros(dy.rows(), columns.rows());
                    gemm(&dy, false, columns, true, &mut dw, 0.0);
                    let w = self.value(*weight);
                    let mut dcols = Matrix::zeros(columns.rows(), columns.cols());
                    gemm(w, true, &dy, false, &mut dcols, 0.0);
                    let (c_in, len) = self.shape(*input);
                    let dx = col2im(&dcols, c_in, len, *kernel, *stride, *padding);
                    acc(&mut grads, *weight, dw);
                    acc(&mut grads, *input, dx);
                }
                Op::MaxPool1d { input, argmax } => {
                    let (channels, len) = self.shape(*input);
                    let out_len = dy.cols();
                    let mut dx = Matrix::zeros(channels, len);
                    for c in 0..channels {
                        for t in 0..out_len {
                            let src = argmax[c * out_len + t];
                            if src != usize::MAX {
                                let row = dx.row_mut(c);
                                row[src] += dy.get(c, t);
                            }
                        }
                    }
                    acc(&mut grads, *input, dx);
                }
                Op::LayerNorm { input, gain, bias, normalized, inv_std } => {
                    let (rows, cols) = normalized.shape();
                    let g = self.value(*gain);
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let xhat = normalized.row(r);
                        let gy = dy.row(r);
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        let dxhat: Vec<f64> = (0..cols)
                            .map(|c| {
                                dg[c] += gy[c] * xhat[c];
                                db[c] += gy[c];
                                let d = gy[c] * g.get(0, c);
                                sum_d += d;
                                sum_dx += d * xhat[c];
                                d
                            })
                            .collect();
                        let n = cols as f64;
                        let is = inv_std[r];
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            out[c] = is / n * (n * dxhat[c] - sum_d - xhat[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *gain, Matrix::row_vector(dg));
                    acc(&mut grads, *bias, Matrix::row_vector(db));
                    acc(&mut grads, *input, dx);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = dy.get(0, 0);
                    let mut dz = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let out = dz.row_mut(r);
                            out.copy_from_slice(probs.row(r));
                            out[*t] -= 1.0;
                            out.iter_mut().for_each(|v| *v *= scale);
                        }
                    }
                    acc(&mut grads, *logits, dz);
                }
            }
            grads[i] = Some(dy);
        }
        Backprop { params, nodes: grads }
    }
}

/// Result of [`Graph::backward`].
pub struct Backprop {
    pub params: Gradients,
    nodes: Vec<Option<Matrix>>,
}

impl Backprop {
    /// Gradient of the root with respect to an arbitrary node, `None` if unreachable.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].as_ref()
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64], allowed: Option<&[bool]>) {
    let ok = |c: usize| allowed.is_none_or(|a| a[c]);
    let max = row.iter().enumerate().filter(|(c, _)| ok(*c)).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (c, v) in row.iter_mut().enumerate() {
        if ok(c) {
            *v = (*v - max).exp();
            total += *v;
        } else {
            *v = 0.0;
        }
    }
    if total > 0.0 {
        row.iter_mut().for_each(|v| *v /= total);
    }
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let padded = len + 2 * padding;
    if padded < kernel {
        0
    } else {
        (padded - kernel) / stride + 1
    }
}

fn im2col(x: &Matrix, kernel: usize, stride: usize, padding: usize, out_len: usize) -> Matrix {
    let (c_in, len) = x.shape();
    let mut cols = Matrix::zeros(c_in * kernel, out_len);
    for c in 0..c_in {
        let src = x.row(c);
        for j in 0..kernel {
            let dst = cols.row_mut(c * kernel + j);
            for (t, d) in dst.iter_mut().enumerate() {
                let i = (t * stride + j) as isize - padding as isize;
                if i >= 0 && (i as usize) < len {
                    *d = src[i as usize];
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Matrix, c_in: usize, len: usize, kernel: usize, stride: usize, padding: usize) -> Matrix {
    let mut dx = Matrix::zeros(c_in, len);
    for c in 0..c_in {
        for j in 0..kernel {
            let src = cols.row(c * kernel + j);
            let dst = dx.row_mut(c);
            for (t, s) in src.iter().enumerate() {
                let i = (t * stride + j) as isize - padding as isize;
                if i >= 0 && (i as usize) < len {
                    dst[i as usize] += s;
                }
            }
        }
    }
    dx
}

//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and accumulates adjoints.
//! Parameters enter the graph through [`Graph::param`] and are identified by
//! their slot index so gradients can be gathered back into a parameter list.

use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gather(Var, Vec<usize>),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, inv_std: Vec<f64> },
    Gelu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ColSlice(Var, usize),
    ConcatCols(Vec<Var>),
    PickEntries(Var, Vec<(usize, usize)>),
    PickRows(Var, Vec<usize>),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    Sum(Var),
    SumCols(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Gather(..) => "gather",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(_) => "gelu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::SoftmaxRows(_) => "softmax",
            Op::LogSoftmaxRows(_) => "log_softmax",
            Op::ColSlice(..) => "col_slice",
            Op::ConcatCols(_) => "concat_cols",
            Op::PickEntries(..) => "pick_entries",
            Op::PickRows(..) => "pick_rows",
            Op::Clamp(..) => "clamp",
            Op::Min(..) => "min",
            Op::Sum(_) => "sum",
            Op::SumCols(_) => "sum_cols",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    label: Option<String>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints for every node of a graph after a backward pass.
pub struct Adjoints {
    grads: Vec<Option<Matrix>>,
    params: Vec<(usize, Var)>,
}

impl Adjoints {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for parameter slot `slot`, if that slot was used in the graph.
    pub fn param(&self, slot: usize) -> Option<&Matrix> {
        self.params
            .iter()
            .filter(|(s, _)| *s == slot)
            .filter_map(|(_, v)| self.grads[v.0].as_ref())
            .next()
    }

    /// Sum of gradients over every node registered for `slot`.
    pub fn param_sum(&self, slot: usize, shape: (usize, usize)) -> Matrix {
        let mut acc = Matrix::zeros(shape.0, shape.1);
        for (s, v) in &self.params {
            if *s == slot {
                if let Some(g) = &self.grads[v.0] {
                    acc.add_assign(g);
                }
            }
        }
        acc
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op, label: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Attach a human-readable label, used in numeric error reports.
    pub fn label(&mut self, v: Var, label: impl Into<String>) -> Var {
        self.nodes[v.0].label = Some(label.into());
        v
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.input(value)
    }

    pub fn param(&mut self, slot: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
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

    /// Adds a `1 x n` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a single row");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut v = self.value(a).clone();
        let r = r.row(0).to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    /// Rows `indices` of `table`, in order (embedding lookup).
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Matrix::zeros(indices.len(), t.cols());
        for (i, &idx) in indices.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(idx));
        }
        self.push(v, Op::Gather(table, indices.to_vec()))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let g = self.value(gain).row(0).to_vec();
        let b = self.value(bias).row(0).to_vec();
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat.set(i, j, h);
                out.set(i, j, h * g[j] + b[j]);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()));
        self.push(v, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            softmax_in_place(v.row_mut(i));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let lse = log_sum_exp(v.row(i));
            for x in v.row_mut(i) {
                *x -= lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    /// Columns `start..start + width` of `a`.
    pub fn col_slice(&mut self, a: Var, start: usize, width: usize) -> Var {
        let av = self.value(a);
        assert!(start + width <= av.cols(), "col_slice out of range");
        let mut v = Matrix::zeros(av.rows(), width);
        for i in 0..av.rows() {
            v.row_mut(i).copy_from_slice(&av.row(i)[start..start + width]);
        }
        self.push(v, Op::ColSlice(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                v.row_mut(i)[off..off + pv.cols()].copy_from_slice(pv.row(i));
                off += pv.cols();
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Column vector of the entries `a[r][c]` for each `(r, c)`.
    pub fn pick_entries(&mut self, a: Var, entries: &[(usize, usize)]) -> Var {
        let av = self.value(a);
        let data = entries.iter().map(|&(r, c)| av.get(r, c)).collect();
        let v = Matrix::from_vec(entries.len(), 1, data);
        self.push(v, Op::PickEntries(a, entries.to_vec()))
    }

    pub fn pick_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let av = self.value(a);
        let mut v = Matrix::zeros(rows.len(), av.cols());
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).copy_from_slice(av.row(r));
        }
        self.push(v, Op::PickRows(a, rows.to_vec()))
    }

    /// Elementwise clamp; the subgradient passes through inside `[lo, hi]` and is zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), f64::min);
        self.push(v, Op::Min(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|i| av.row(i).iter().sum()).collect();
        let v = Matrix::from_vec(av.rows(), 1, data);
        self.push(v, Op::SumCols(a))
    }

    /// First node whose value is not finite, reported by op name and label.
    pub fn check_finite(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.value.is_finite() {
                let name = match &n.label {
                    Some(l) => format!("node {i} ({}, '{l}')", n.op.name()),
                    None => format!("node {i} ({})", n.op.name()),
                };
                return Err(Error::numeric(name, "non-finite value"));
            }
        }
        Ok(())
    }

    /// Reverse pass from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::invalid(format!("backward needs a scalar loss, got {:?}", lv.shape())));
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut params = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(slot) => params.push((*slot, Var(idx))),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b));
                    let gb = self.value(*a).matmul_at(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    // out = a b^T ; da = g b ; db = g^T a
                    let ga = g.matmul(self.value(*b));
                    let gb = g.matmul_at(self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (acc, v) in gr.row_mut(0).iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Gather(table, indices) => {
                    let (r, c) = self.value(*table).shape();
                    let mut gt = Matrix::zeros(r, c);
                    for (i, &idx) in indices.iter().enumerate() {
                        for (acc, v) in gt.row_mut(idx).iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let (n, d) = xhat.shape();
                    let gv = self.value(*gain).row(0).to_vec();
                    let mut gx = Matrix::zeros(n, d);
                    let mut gg = Matrix::zeros(1, d);
                    let mut gb = Matrix::zeros(1, d);
                    for i in 0..n {
                        let dy = g.row(i);
                        let xh = xhat.row(i);
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = dy[j] * gv[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j];
                            gg.row_mut(0)[j] += dy[j] * xh[j];
                            gb.row_mut(0)[j] += dy[j];
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        let out = gx.row_mut(i);
                        for j in 0..d {
                            let dxh = dy[j] * gv[j];
                            out[j] = inv_std[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gain, gg);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Gelu(a) => {
                    let ga = g.zip_map(self.value(*a), |gy, x| {
                        let inner = GELU_C * (x + GELU_A * x * x * x);
                        let t = inner.tanh();
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gy * d
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |gy, y| gy * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |gy, y| gy * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(*a), |gy, x| gy / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let s: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                        for ((o, gy), yy) in ga.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                            *o = yy * (gy - s);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let s: f64 = g.row(i).iter().sum();
                        for ((o, gy), yy) in ga.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                            *o = gy - yy.exp() * s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColSlice(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    let w = g.cols();
                    for i in 0..r {
                        ga.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = self.value(*p).shape();
                        let mut gp = Matrix::zeros(r, c);
                        for i in 0..r {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        off += c;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::PickEntries(a, entries) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (i, &(row, col)) in entries.iter().enumerate() {
                        let cur = ga.get(row, col);
                        ga.set(row, col, cur + g.get(i, 0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::PickRows(a, rows) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (i, &row) in rows.iter().enumerate() {
                        for (acc, v) in ga.row_mut(row).iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(*a), |gy, x| if x >= *lo && x <= *hi { gy } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Min(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mask = av.zip_map(bv, |x, y| if x <= y { 1.0 } else { 0.0 });
                    let ga = g.zip_map(&mask, |gy, m| gy * m);
                    let gb = g.zip_map(&mask, |gy, m| gy * (1.0 - m));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.value()));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        let gi = g.get(i, 0);
                        ga.row_mut(i).iter_mut().for_each(|v| *v = gi);
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[idx] = Some(g);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::numeric(
                        format!("node {i} ({})", self.nodes[i].op.name()),
                        "non-finite adjoint",
                    ));
                }
            }
        }
        Ok(Adjoints { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

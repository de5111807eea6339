//! Eager reverse-mode differentiation over 2-D `f64` arrays.
//!
//! Every operation evaluates immediately and appends a node to the [`Tape`].
//! Recording order is a topological order, so [`Tape::backward`] walks the
//! nodes once, from the loss down to the first node. Vectors are row
//! matrices (`1 × n`) and scalars are `1 × 1`.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{NumericError, ParamStore};

pub type Matrix = Array2<f64>;

const COSINE_NORM_FLOOR: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    ScaleRows(usize, usize),
    Concat { parts: Vec<usize>, axis: usize },
    SliceCols { src: usize, start: usize },
    GatherRows { src: usize, indices: Vec<usize> },
    ScatterAddRows { src: usize, indices: Vec<usize> },
    Transpose(usize),
    SoftmaxRows(usize),
    SegmentSoftmax { src: usize, segments: Vec<usize> },
    LeakyRelu(usize, f64),
    Elu(usize),
    Gelu(usize),
    Mean { src: usize, axis: usize },
    SumAll(usize),
    Cosine(usize, usize),
    MaskedFill { src: usize, mask: Array2<bool> },
    LayerNorm { x: usize, gamma: usize, beta: usize, normed: Matrix, inv_std: Vec<f64> },
    Dropout { src: usize, mask: Matrix },
    CrossEntropy { logits: usize, targets: Vec<Option<u32>>, smoothing: f64, probs: Matrix, count: usize },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records operations for one forward/backward pass. A tape is confined to
/// one thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<String, usize>>,
}

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

fn shape(m: &Matrix) -> (usize, usize) {
    m.dim()
}

fn shape_err(op: &'static str, shapes: &[(usize, usize)]) -> NumericError {
    NumericError::Shape {
        op,
        shapes: shapes.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), x))
    }

    pub fn row(&self, values: &[f64]) -> Var<'_> {
        self.constant(Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape"))
    }

    /// Leaf for a named parameter; repeated requests return the same leaf.
    pub fn param(&self, store: &ParamStore, name: &str) -> Result<Var<'_>, NumericError> {
        if let Some(&id) = self.params.borrow().get(name) {
            return Ok(Var { tape: self, id });
        }
        let value = store
            .get(name)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))?
            .value
            .clone();
        let v = self.push(value, Op::Leaf);
        self.params.borrow_mut().insert(name.to_string(), v.id);
        Ok(v)
    }

    fn value(&self, id: usize) -> Ref<'_, Matrix> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse pass from a scalar. The tape is left untouched, so repeated
    /// calls return identical gradients.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NumericError> {
        let nodes = self.nodes.borrow();
        let (r, c) = shape(&nodes[loss.id].value);
        if (r, c) != (1, 1) {
            return Err(shape_err("backward", &[(r, c)]));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Array2::ones((1, 1)));
        let is_leaf: Vec<bool> = nodes.iter().map(|n| matches!(n.op, Op::Leaf)).collect();
        for id in (0..=loss.id).rev() {
            let Some(g) = (if is_leaf[id] { grads[id].clone() } else { grads[id].take() }) else {
                continue;
            };
            backprop(&nodes, id, &g, &mut grads);
        }
        let params = self
            .params
            .borrow()
            .iter()
            .filter_map(|(name, &id)| grads[id].clone().map(|g| (name.clone(), g)))
            .collect();
        Ok(Gradients {
            params,
            values: grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(acc) => *acc += &g,
        slot => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            accumulate(grads, a, g.dot(&val(b).t()));
            accumulate(grads, b, val(a).t().dot(g));
        }
        &Op::Add(a, b) => {
            accumulate(grads, a, g.clone());
            accumulate(grads, b, g.clone());
        }
        &Op::AddRow(a, b) => {
            accumulate(grads, a, g.clone());
            accumulate(grads, b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
        }
        &Op::Sub(a, b) => {
            accumulate(grads, a, g.clone());
            accumulate(grads, b, -g);
        }
        &Op::Mul(a, b) => {
            accumulate(grads, a, g * val(b));
            accumulate(grads, b, g * val(a));
        }
        &Op::Scale(a, k) => accumulate(grads, a, g * k),
        &Op::ScaleRows(a, s) => {
            accumulate(grads, a, g * val(s));
            let gs = (g * val(a)).sum_axis(Axis(1)).insert_axis(Axis(1));
            accumulate(grads, s, gs);
        }
        Op::Concat { parts, axis } => {
            let mut offset = 0;
            for &p in parts {
                let n = val(p).len_of(Axis(*axis));
                let piece = if *axis == 0 {
                    g.slice(s![offset..offset + n, ..]).to_owned()
                } else {
                    g.slice(s![.., offset..offset + n]).to_owned()
                };
                accumulate(grads, p, piece);
                offset += n;
            }
        }
        &Op::SliceCols { src, start } => {
            let mut full = Array2::zeros(val(src).dim());
            let w = g.ncols();
            full.slice_mut(s![.., start..start + w]).assign(g);
            accumulate(grads, src, full);
        }
        Op::GatherRows { src, indices } => {
            let mut full = Array2::zeros(val(*src).dim());
            for (row, &i) in indices.iter().enumerate() {
                let mut dst = full.row_mut(i);
                dst += &g.row(row);
            }
            accumulate(grads, *src, full);
        }
        Op::ScatterAddRows { src, indices } => {
            accumulate(grads, *src, g.select(Axis(0), indices));
        }
        &Op::Transpose(a) => accumulate(grads, a, g.t().to_owned()),
        &Op::SoftmaxRows(a) => {
            let mut gi = g * out;
            for (mut row, y) in gi.rows_mut().into_iter().zip(out.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&y, |r, &yv| *r -= yv * dot);
            }
            accumulate(grads, a, gi);
        }
        Op::SegmentSoftmax { src, segments } => {
            let n_seg = segments.iter().max().map_or(0, |m| m + 1);
            let mut dots = vec![0.0; n_seg];
            for (e, &sg) in segments.iter().enumerate() {
                dots[sg] += g[[e, 0]] * out[[e, 0]];
            }
            let mut gi = Array2::zeros(out.dim());
            for (e, &sg) in segments.iter().enumerate() {
                gi[[e, 0]] = out[[e, 0]] * (g[[e, 0]] - dots[sg]);
            }
            accumulate(grads, *src, gi);
        }
        &Op::LeakyRelu(a, slope) => {
            let mut gi = g.clone();
            Zip::from(&mut gi).and(val(a)).for_each(|d, &x| {
                if x <= 0.0 {
                    *d *= slope
                }
            });
            accumulate(grads, a, gi);
        }
        &Op::Elu(a) => {
            let mut gi = g.clone();
            Zip::from(&mut gi).and(val(a)).for_each(|d, &x| {
                if x <= 0.0 {
                    *d *= x.exp()
                }
            });
            accumulate(grads, a, gi);
        }
        &Op::Gelu(a) => {
            let mut gi = g.clone();
            Zip::from(&mut gi).and(val(a)).for_each(|d, &x| {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                *d *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            });
            accumulate(grads, a, gi);
        }
        &Op::Mean { src, axis } => {
            let (r, c) = val(src).dim();
            let n = if axis == 0 { r } else { c } as f64;
            let gi = g.broadcast((r, c)).expect("mean broadcast").mapv(|x| x / n);
            accumulate(grads, src, gi);
        }
        &Op::SumAll(a) => {
            let gi = Array2::from_elem(val(a).dim(), g[[0, 0]]);
            accumulate(grads, a, gi);
        }
        &Op::Cosine(a, b) => {
            let (u, v) = (val(a), val(b));
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu < COSINE_NORM_FLOOR || nv < COSINE_NORM_FLOOR {
                return;
            }
            let c = out[[0, 0]];
            let gg = g[[0, 0]];
            let gu = (v / (nu * nv) - u * (c / (nu * nu))) * gg;
            let gv = (u / (nu * nv) - v * (c / (nv * nv))) * gg;
            accumulate(grads, a, gu);
            accumulate(grads, b, gv);
        }
        Op::MaskedFill { src, mask } => {
            let mut gi = g.clone();
            Zip::from(&mut gi).and(mask).for_each(|d, &m| {
                if m {
                    *d = 0.0
                }
            });
            accumulate(grads, *src, gi);
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            normed,
            inv_std,
        } => {
            let gamma_v = val(*gamma);
            let n = normed.ncols() as f64;
            let dxhat = g * gamma_v;
            let mut dx = Array2::zeros(normed.dim());
            for (r, inv) in inv_std.iter().enumerate() {
                let dh = dxhat.row(r);
                let xh = normed.row(r);
                let sum_dh = dh.sum();
                let sum_dh_xh = dh.dot(&xh);
                let mut row = dx.row_mut(r);
                Zip::from(&mut row)
                    .and(&dh)
                    .and(&xh)
                    .for_each(|o, &d, &h| *o = inv / n * (n * d - sum_dh - h * sum_dh_xh));
            }
            accumulate(grads, *x, dx);
            accumulate(grads, *gamma, (g * normed).sum_axis(Axis(0)).insert_axis(Axis(0)));
            accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
        }
        Op::Dropout { src, mask } => accumulate(grads, *src, g * mask),
        Op::CrossEntropy {
            logits,
            targets,
            smoothing,
            probs,
            count,
        } => {
            let v = probs.ncols();
            let off = if v > 1 { smoothing / (v - 1) as f64 } else { 0.0 };
            let scale = g[[0, 0]] / (*count).max(1) as f64;
            let mut gi = Array2::zeros(probs.dim());
            for (r, t) in targets.iter().enumerate() {
                let Some(t) = t else { continue };
                let mut row = gi.row_mut(r);
                for (k, p) in probs.row(r).iter().enumerate() {
                    let q = if k == *t as usize { 1.0 - smoothing } else { off };
                    row[k] = (p - q) * scale;
                }
            }
            accumulate(grads, *logits, gi);
        }
    }
}

/// Result of a reverse pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: HashMap<String, Matrix>,
    values: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a leaf value (constant or parameter), if it was reached.
    pub fn get(&self, v: Var<'_>) -> Option<&Matrix> {
        self.values.get(v.id).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name)
    }

    pub fn params(&self) -> &HashMap<String, Matrix> {
        &self.params
    }

    pub fn into_params(self) -> HashMap<String, Matrix> {
        self.params
    }
}

fn softmax_row_inplace(mut row: ndarray::ArrayViewMut1<'_, f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|x| (x - max).exp());
    let sum = row.sum();
    row.mapv_inplace(|x| x / sum);
}

/// Row-wise softmax without recording, for inference-only callers.
pub fn softmax_rows(m: ArrayView2<'_, f64>) -> Matrix {
    let mut out = m.to_owned();
    for row in out.rows_mut() {
        softmax_row_inplace(row);
    }
    out
}

/// Row-wise log-softmax without recording.
pub fn log_softmax_rows(m: ArrayView2<'_, f64>) -> Matrix {
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    pub fn nrows(&self) -> usize {
        self.shape().0
    }

    pub fn ncols(&self) -> usize {
        self.shape().1
    }

    /// The single entry of a `1 × 1` value.
    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    fn unary(&self, f: impl FnOnce(&Matrix) -> Matrix, op: Op) -> Var<'t> {
        let out = f(&self.value());
        self.tape.push(out, op)
    }

    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<(), NumericError> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(shape_err(op, &[a, b]));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, NumericError> {
        let (a, b) = (self.shape(), other.shape());
        if a.1 != b.0 {
            return Err(shape_err("matmul", &[a, b]));
        }
        let out = self.value().dot(&*other.value());
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, NumericError> {
        self.same_shape(other, "add")?;
        let out = &*self.value() + &*other.value();
        Ok(self.tape.push(out, Op::Add(self.id, other.id)))
    }

    /// Adds a `1 × n` row to every row.
    pub fn add_row(&self, row: &Var<'t>) -> Result<Var<'t>, NumericError> {
        let (a, b) = (self.shape(), row.shape());
        if b != (1, a.1) {
            return Err(shape_err("add_row", &[a, b]));
        }
        let out = &*self.value() + &*row.value();
        Ok(self.tape.push(out, Op::AddRow(self.id, row.id)))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, NumericError> {
        self.same_shape(other, "sub")?;
        let out = &*self.value() - &*other.value();
        Ok(self.tape.push(out, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, NumericError> {
        self.same_shape(other, "mul")?;
        let out = &*self.value() * &*other.value();
        Ok(self.tape.push(out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, k: f64) -> Var<'t> {
        self.unary(|x| x * k, Op::Scale(self.id, k))
    }

    /// Multiplies row `i` by the `i`-th entry of an `m × 1` column.
    pub fn scale_rows(&self, factors: &Var<'t>) -> Result<Var<'t>, NumericError> {
        let (a, b) = (self.shape(), factors.shape());
        if b != (a.0, 1) {
            return Err(shape_err("scale_rows", &[a, b]));
        }
        let out = &*self.value() * &*factors.value();
        Ok(self.tape.push(out, Op::ScaleRows(self.id, factors.id)))
    }

    pub fn transpose(&self) -> Var<'t> {
        self.unary(|x| x.t().to_owned(), Op::Transpose(self.id))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if start > end || end > a.1 {
            return Err(shape_err("slice_cols", &[a, (start, end)]));
        }
        let out = self.value().slice(s![.., start..end]).to_owned();
        Ok(self.tape.push(out, Op::SliceCols { src: self.id, start }))
    }

    /// Rows `indices` in order; indices may repeat. Embedding lookup is this
    /// operation applied to a table.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.0) {
            return Err(shape_err("gather_rows", &[a, (bad, 0)]));
        }
        let out = self.value().select(Axis(0), indices);
        Ok(self.tape.push(
            out,
            Op::GatherRows {
                src: self.id,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn embedding(&self, ids: &[u32]) -> Result<Var<'t>, NumericError> {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        self.gather_rows(&idx)
    }

    /// Output row `indices[e]` receives the sum of input rows `e`.
    pub fn scatter_add_rows(&self, indices: &[usize], n_rows: usize) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if indices.len() != a.0 || indices.iter().any(|&i| i >= n_rows) {
            return Err(shape_err("scatter_add_rows", &[a, (indices.len(), n_rows)]));
        }
        let src = self.value();
        let mut out = Array2::zeros((n_rows, a.1));
        for (e, &i) in indices.iter().enumerate() {
            let mut dst = out.row_mut(i);
            dst += &src.row(e);
        }
        drop(src);
        Ok(self.tape.push(
            out,
            Op::ScatterAddRows {
                src: self.id,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, NumericError> {
        let first = parts.first().ok_or_else(|| shape_err("concat", &[]))?;
        let shapes: Vec<(usize, usize)> = parts.iter().map(Var::shape).collect();
        let other_axis_ok = shapes
            .iter()
            .all(|s| if axis == 0 { s.1 == shapes[0].1 } else { s.0 == shapes[0].0 });
        if axis > 1 || !other_axis_ok {
            return Err(shape_err("concat", &shapes));
        }
        let values: Vec<Ref<'t, Matrix>> = parts.iter().map(Var::value).collect();
        let views: Vec<ArrayView2<'_, f64>> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).map_err(|_| shape_err("concat", &shapes))?;
        drop(views);
        drop(values);
        Ok(first.tape.push(
            out,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
        ))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        self.unary(|x| softmax_rows(x.view()), Op::SoftmaxRows(self.id))
    }

    /// Softmax of an `E × 1` column within groups: entries sharing a segment
    /// id are normalised together.
    pub fn segment_softmax(&self, segments: &[usize]) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if a.1 != 1 || segments.len() != a.0 {
            return Err(shape_err("segment_softmax", &[a, (segments.len(), 1)]));
        }
        let x = self.value();
        let n_seg = segments.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (e, &sg) in segments.iter().enumerate() {
            max[sg] = max[sg].max(x[[e, 0]]);
        }
        let mut out = Array2::zeros(a);
        let mut sum = vec![0.0; n_seg];
        for (e, &sg) in segments.iter().enumerate() {
            let v = (x[[e, 0]] - max[sg]).exp();
            out[[e, 0]] = v;
            sum[sg] += v;
        }
        for (e, &sg) in segments.iter().enumerate() {
            out[[e, 0]] /= sum[sg];
        }
        drop(x);
        Ok(self.tape.push(
            out,
            Op::SegmentSoftmax {
                src: self.id,
                segments: segments.to_vec(),
            },
        ))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(
            |x| x.mapv(|v| if v > 0.0 { v } else { slope * v }),
            Op::LeakyRelu(self.id, slope),
        )
    }

    pub fn elu(&self) -> Var<'t> {
        self.unary(|x| x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() }), Op::Elu(self.id))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Var<'t> {
        self.unary(
            |x| x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh())),
            Op::Gelu(self.id),
        )
    }

    /// Mean over rows (`axis = 0`, giving `1 × n`) or columns (`axis = 1`,
    /// giving `m × 1`).
    pub fn mean(&self, axis: usize) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if axis > 1 || (axis == 0 && a.0 == 0) || (axis == 1 && a.1 == 0) {
            return Err(shape_err("mean", &[a, (axis, 0)]));
        }
        let out = self
            .value()
            .mean_axis(Axis(axis))
            .expect("non-empty axis")
            .insert_axis(Axis(axis));
        Ok(self.tape.push(out, Op::Mean { src: self.id, axis }))
    }

    pub fn sum_all(&self) -> Var<'t> {
        self.unary(|x| Array2::from_elem((1, 1), x.sum()), Op::SumAll(self.id))
    }

    /// Cosine similarity of two same-shape values, flattened. Zero (with zero
    /// gradient) when either norm is below 1e-12.
    pub fn cosine(&self, other: &Var<'t>) -> Result<Var<'t>, NumericError> {
        self.same_shape(other, "cosine")?;
        let (u, v) = (self.value(), other.value());
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = if nu < COSINE_NORM_FLOOR || nv < COSINE_NORM_FLOOR {
            0.0
        } else {
            (&*u * &*v).sum() / (nu * nv)
        };
        drop((u, v));
        Ok(self.tape.push(Array2::from_elem((1, 1), c), Op::Cosine(self.id, other.id)))
    }

    /// Replaces entries where `mask` is true with `fill`.
    pub fn masked_fill(&self, mask: &Array2<bool>, fill: f64) -> Result<Var<'t>, NumericError> {
        let a = self.shape();
        if mask.dim() != a {
            return Err(shape_err("masked_fill", &[a, mask.dim()]));
        }
        let mut out = self.value().clone();
        Zip::from(&mut out).and(mask).for_each(|o, &m| {
            if m {
                *o = fill
            }
        });
        Ok(self.tape.push(
            out,
            Op::MaskedFill {
                src: self.id,
                mask: mask.clone(),
            },
        ))
    }

    /// Row-wise layer normalisation with `1 × n` gain and bias.
    pub fn layer_norm(&self, gamma: &Var<'t>, beta: &Var<'t>, eps: f64) -> Result<Var<'t>, NumericError> {
        let (a, g, b) = (self.shape(), gamma.shape(), beta.shape());
        if g != (1, a.1) || b != (1, a.1) {
            return Err(shape_err("layer_norm", &[a, g, b]));
        }
        let x = self.value();
        let mut normed = x.clone();
        let mut inv_std = Vec::with_capacity(a.0);
        for mut row in normed.rows_mut() {
            let mu = row.mean().unwrap_or(0.0);
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / a.1 as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mu) * inv);
            inv_std.push(inv);
        }
        drop(x);
        let out = &(&normed * &*gamma.value()) + &*beta.value();
        Ok(self.tape.push(
            out,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                normed,
                inv_std,
            },
        ))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&self, p: f64, rng: &mut impl Rng) -> Var<'t> {
        if p <= 0.0 {
            return *self;
        }
        let keep = 1.0 / (1.0 - p);
        let mask = Array2::from_shape_fn(self.shape(), |_| if rng.gen::<f64>() < p { 0.0 } else { keep });
        let out = &*self.value() * &mask;
        self.tape.push(out, Op::Dropout { src: self.id, mask })
    }

    /// Mean label-smoothed cross-entropy of `T × V` logits. The gold class
    /// gets `1 − ε`, every other class `ε / (V − 1)`. Rows whose target is
    /// `None` are skipped.
    pub fn cross_entropy_smoothed(&self, targets: &[Option<u32>], smoothing: f64) -> Result<Var<'t>, NumericError> {
        let (t, v) = self.shape();
        if targets.len() != t || targets.iter().flatten().any(|&y| y as usize >= v) {
            return Err(shape_err("cross_entropy_smoothed", &[(t, v), (targets.len(), 1)]));
        }
        let logp = log_softmax_rows(self.value().view());
        let off = if v > 1 { smoothing / (v - 1) as f64 } else { 0.0 };
        let mut total = 0.0;
        let mut count = 0;
        for (r, y) in targets.iter().enumerate() {
            let Some(y) = y else { continue };
            let row = logp.row(r);
            let gold = row[*y as usize];
            let rest = row.sum() - gold;
            total -= (1.0 - smoothing) * gold + off * rest;
            count += 1;
        }
        let loss = if count > 0 { total / count as f64 } else { 0.0 };
        let probs = logp.mapv(f64::exp);
        Ok(self.tape.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                smoothing,
                probs,
                count,
            },
        ))
    }
}

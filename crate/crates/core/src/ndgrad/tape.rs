//! Wengert-list autodiff over [`Matrix`] values.
//!
//! Every primitive appends one node holding its forward value; inputs always
//! precede outputs, so insertion order is a topological order and `backward`
//! is a single reverse sweep.

use std::sync::Arc;

use super::{GradError, Matrix};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous row ranges `[offsets[k], offsets[k+1])`; each range is one softmax group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn from_offsets(offsets: Vec<usize>) -> Result<Self, GradError> {
        if offsets.first() != Some(&0) {
            return Err(GradError::InvalidSegment(0));
        }
        if let Some(k) = offsets.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GradError::InvalidSegment(k));
        }
        Ok(Self { offsets })
    }

    pub fn from_lengths(lengths: &[usize]) -> Result<Self, GradError> {
        let mut offsets = Vec::with_capacity(lengths.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &l in lengths {
            acc += l;
            offsets.push(acc);
        }
        Self::from_offsets(offsets)
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of indexed rows.
    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Elu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<Segments>),
    WeightedScatter { coef: Var, values: Var, targets: Arc<[usize]> },
    Sum(Var),
    Mae { pred: Var, rows: Arc<[usize]>, targets: Arc<[f64]> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Elu(_) => "elu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Exp(_) => "exp",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::WeightedScatter { .. } => "weighted_scatter",
            Op::Sum(_) => "sum",
            Op::Mae { .. } => "mae",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Build one per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn leaky(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x
    }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Parameter id of a variable created by [`Tape::param`].
    pub fn param_id(&self, v: Var) -> Option<usize> {
        match self.nodes[v.0].op {
            Op::Param(id) => Some(id),
            _ => None,
        }
    }

    /// Kind of the first recorded node whose value is not finite.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.nodes.iter().find(|n| !n.value.is_finite()).map(|n| n.op.name())
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), GradError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(GradError::Shape { op, left: sa, right: sb });
        }
        Ok(())
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf tracked for gradients; `id` is the caller's parameter slot.
    pub fn param(&mut self, id: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, GradError> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(GradError::Shape { op: "add_row", left: av.shape(), right: rv.shape() });
        }
        let mut out = av.clone();
        let bias = rv.as_slice().to_vec();
        for r in 0..out.rows() {
            for (x, b) in out.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        let rg = self.needs(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("mul", a, b)?;
        let bv = self.value(b).as_slice().to_vec();
        let mut out = self.value(a).clone();
        for (x, y) in out.as_mut_slice().iter_mut().zip(&bv) {
            *x *= y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(elu);
        let rg = self.needs(&[a]);
        self.push(out, Op::Elu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let out = self.value(a).map(|x| leaky(x, alpha));
        let rg = self.needs(&[a]);
        self.push(out, Op::LeakyRelu(a, alpha), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.needs(&[a]);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let first = *parts.first().ok_or(GradError::Empty("concat_cols"))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(GradError::Shape {
                    op: "concat_cols",
                    left: self.value(first).shape(),
                    right: pv.shape(),
                });
            }
            cols += pv.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let first = *parts.first().ok_or(GradError::Empty("concat_rows"))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(GradError::Shape {
                    op: "concat_rows",
                    left: self.value(first).shape(),
                    right: pv.shape(),
                });
            }
            rows += pv.rows();
            data.extend_from_slice(pv.as_slice());
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row `k` of the output is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var, GradError> {
        let av = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= av.rows()) {
            return Err(GradError::Index { op: "gather_rows", index: bad, len: av.rows() });
        }
        let mut out = Matrix::zeros(index.len(), av.cols());
        for (k, &i) in index.iter().enumerate() {
            out.row_mut(k).copy_from_slice(av.row(i));
        }
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::GatherRows(a, index), rg))
    }

    /// Column-wise softmax within each row segment, max-shifted.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<Segments>) -> Result<Var, GradError> {
        let av = self.value(a);
        if segments.total() != av.rows() {
            return Err(GradError::Shape {
                op: "segment_softmax",
                left: av.shape(),
                right: (segments.total(), av.cols()),
            });
        }
        let cols = av.cols();
        let mut out = Matrix::zeros(av.rows(), cols);
        for range in segments.iter() {
            for c in 0..cols {
                let max = range.clone().map(|r| av.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for r in range.clone() {
                    let e = (av.get(r, c) - max).exp();
                    out.set(r, c, e);
                    denom += e;
                }
                for r in range.clone() {
                    out.set(r, c, out.get(r, c) / denom);
                }
            }
        }
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::SegmentSoftmax(a, segments), rg))
    }

    /// Attention-style aggregation.
    ///
    /// `coef` is `E x K`, `values` is `E x C`; the result is `n_out x (K*C)` with
    /// `out[targets[e], k*C + c] += coef[e, k] * values[e, c]`.
    pub fn weighted_scatter(
        &mut self,
        coef: Var,
        values: Var,
        targets: Arc<[usize]>,
        n_out: usize,
    ) -> Result<Var, GradError> {
        let (cv, vv) = (self.value(coef), self.value(values));
        if cv.rows() != vv.rows() || cv.rows() != targets.len() {
            return Err(GradError::Shape {
                op: "weighted_scatter",
                left: cv.shape(),
                right: vv.shape(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n_out) {
            return Err(GradError::Index { op: "weighted_scatter", index: bad, len: n_out });
        }
        let (k_heads, width) = (cv.cols(), vv.cols());
        let mut out = Matrix::zeros(n_out, k_heads * width);
        for (e, &t) in targets.iter().enumerate() {
            let v = vv.row(e);
            let w = cv.row(e);
            let dst = out.row_mut(t);
            for (k, &wk) in w.iter().enumerate() {
                for (o, &x) in dst[k * width..(k + 1) * width].iter_mut().zip(v) {
                    *o += wk * x;
                }
            }
        }
        let rg = self.needs(&[coef, values]);
        Ok(self.push(out, Op::WeightedScatter { coef, values, targets }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    /// Mean absolute error of the selected rows of an `N x 1` prediction column.
    pub fn mae(&mut self, pred: Var, rows: Arc<[usize]>, targets: Arc<[f64]>) -> Result<Var, GradError> {
        let pv = self.value(pred);
        if pv.cols() != 1 || rows.len() != targets.len() {
            return Err(GradError::Shape { op: "mae", left: pv.shape(), right: (rows.len(), 1) });
        }
        if rows.is_empty() {
            return Err(GradError::Empty("mae"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= pv.rows()) {
            return Err(GradError::Index { op: "mae", index: bad, len: pv.rows() });
        }
        let total: f64 = rows.iter().zip(targets.iter()).map(|(&r, &y)| (pv.get(r, 0) - y).abs()).sum();
        let out = Matrix::scalar(total / rows.len() as f64);
        let rg = self.needs(&[pred]);
        Ok(self.push(out, Op::Mae { pred, rows, targets }, rg))
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, GradError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(GradError::NotScalar(lv.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Mutable gradient slot for `v`, zero-initialized on first touch.
    fn slot<'g>(&self, grads: &'g mut [Option<Matrix>], v: Var) -> &'g mut Matrix {
        let shape = self.value(v).shape();
        grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    let bv = self.value(*b);
                    g.matmul_nt_into(bv, self.slot(grads, *a));
                }
                if needs(*b) {
                    let av = self.value(*a);
                    av.matmul_tn_into(g, self.slot(grads, *b));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if needs(*row) {
                    let mut d = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, x) in d.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *row, d);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let mut d = g.clone();
                    d.as_mut_slice().iter_mut().zip(bv.as_slice()).for_each(|(x, y)| *x *= y);
                    self.accumulate(grads, *a, d);
                }
                if needs(*b) {
                    let mut d = g.clone();
                    d.as_mut_slice().iter_mut().zip(av.as_slice()).for_each(|(x, y)| *x *= y);
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::Elu(a) => {
                let mut d = g.clone();
                for (x, &y) in d.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    // d/dx elu = 1 for x > 0, exp(x) = y + 1 otherwise
                    if y <= 0.0 {
                        *x *= y + 1.0;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, alpha) => {
                let mut d = g.clone();
                for (x, &inp) in d.as_mut_slice().iter_mut().zip(self.value(*a).as_slice()) {
                    if inp <= 0.0 {
                        *x *= alpha;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => {
                let mut d = g.clone();
                d.as_mut_slice().iter_mut().zip(node.value.as_slice()).for_each(|(x, y)| *x *= y);
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        let mut d = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.value(p).shape();
                    if needs(p) {
                        let d = Matrix::from_vec(r, c, g.as_slice()[off * c..(off + r) * c].to_vec())
                            .expect("concat_rows slice");
                        self.accumulate(grads, p, d);
                    }
                    off += r;
                }
            }
            Op::GatherRows(a, index) => {
                if needs(*a) {
                    let slot = self.slot(grads, *a);
                    for (k, &i) in index.iter().enumerate() {
                        for (acc, x) in slot.row_mut(i).iter_mut().zip(g.row(k)) {
                            *acc += x;
                        }
                    }
                }
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for range in segments.iter() {
                    for c in 0..y.cols() {
                        let dot: f64 = range.clone().map(|r| y.get(r, c) * g.get(r, c)).sum();
                        for r in range.clone() {
                            d.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::WeightedScatter { coef, values, targets } => {
                let (cv, vv) = (self.value(*coef), self.value(*values));
                let width = vv.cols();
                if needs(*coef) {
                    let mut d = Matrix::zeros(cv.rows(), cv.cols());
                    for (e, &t) in targets.iter().enumerate() {
                        let v = vv.row(e);
                        let gr = g.row(t);
                        for k in 0..cv.cols() {
                            let s: f64 = gr[k * width..(k + 1) * width].iter().zip(v).map(|(a, b)| a * b).sum();
                            d.set(e, k, s);
                        }
                    }
                    self.accumulate(grads, *coef, d);
                }
                if needs(*values) {
                    let mut d = Matrix::zeros(vv.rows(), width);
                    for (e, &t) in targets.iter().enumerate() {
                        let gr = g.row(t);
                        let w = cv.row(e);
                        let dst = d.row_mut(e);
                        for (k, &wk) in w.iter().enumerate() {
                            for (o, x) in dst.iter_mut().zip(&gr[k * width..(k + 1) * width]) {
                                *o += wk * x;
                            }
                        }
                    }
                    self.accumulate(grads, *values, d);
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g.as_slice()[0]));
            }
            Op::Mae { pred, rows, targets } => {
                let pv = self.value(*pred);
                let scale = g.as_slice()[0] / rows.len() as f64;
                let slot = self.slot(grads, *pred);
                for (&r, &y) in rows.iter().zip(targets.iter()) {
                    let diff = pv.get(r, 0) - y;
                    let s = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let cur = slot.get(r, 0);
                    slot.set(r, 0, cur + s * scale);
                }
            }
        }
    }
}

//! Tape-style reverse-mode differentiation over dense matrices.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and `backward` is a single reverse sweep. A graph lives
//! for one forward/backward pass and is dropped afterwards.

use crate::error::{Error, Result};
use crate::numcore::{Mat, EPS};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddConst(Var),
    MulConst(Var, Mat),
    Scale(Var, f64),
    Relu(Var),
    RowL2Normalize(Var, Vec<f64>),
    RowwiseMax(Var, Vec<usize>),
    SegmentMax(Var, Vec<usize>),
    LogSumExp(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    ClampMin(Var, f64),
    Mean(Var),
    Sum(Var),
    RowSum(Var),
    Pick(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    Transpose(Var),
    SoftmaxRows(Var),
    BceLogits(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` did not
    /// influence the root.
    pub fn get(&self, v: Var) -> Mat {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Mat::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Mat, b: &Mat) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMulT(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(op, x, y));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Adds a 1×cols row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(row));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row", x, b));
        }
        let mut v = x.clone();
        for r in 0..v.rows() {
            for (o, bi) in v.row_mut(r).iter_mut().zip(b.as_slice()) {
                *o += bi;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(v, Op::AddRow(a, row), rg))
    }

    /// Adds a constant matrix (no gradient flows into it).
    pub fn add_const(&mut self, a: Var, c: &Mat) -> Result<Var> {
        if self.value(a).shape() != c.shape() {
            return Err(shape_err("add_const", self.value(a), c));
        }
        let v = self.value(a).zip_map(c, |x, y| x + y);
        let rg = self.rg(a);
        Ok(self.push(v, Op::AddConst(a), rg))
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Result<Var> {
        if self.value(a).shape() != c.shape() {
            return Err(shape_err("mul_const", self.value(a), &c));
        }
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        let rg = self.rg(a);
        Ok(self.push(v, Op::MulConst(a, c), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Each row divided by its norm, floored at [`EPS`].
    pub fn row_l2_normalize(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let n = crate::numcore::norm(row);
            norms.push(n);
            let d = n.max(EPS);
            for e in row.iter_mut() {
                *e /= d;
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::RowL2Normalize(a, norms), rg)
    }

    /// Cosine similarity between every row of `a` and every row of `b`.
    pub fn cosine_sim_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        let an = self.row_l2_normalize(a);
        let bn = self.row_l2_normalize(b);
        self.matmul_t(an, bn)
    }

    /// Row maxima as an N×1 column; gradient goes to the first maximal entry.
    pub fn rowwise_max(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut arg = Vec::with_capacity(x.rows());
        let mut out = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let (i, m) = argmax(x.row(r));
            arg.push(i);
            out.push(m);
        }
        let rg = self.rg(a);
        self.push(Mat::column(&out), Op::RowwiseMax(a, arg), rg)
    }

    /// Column-wise max over consecutive blocks of `seg` rows:
    /// `(B·seg)×C → B×C`. Ties route the gradient to the first row.
    pub fn segment_max(&mut self, a: Var, seg: usize) -> Result<Var> {
        let x = self.value(a);
        if seg == 0 || x.rows() % seg != 0 {
            return Err(Error::Domain(format!(
                "segment_max: {} rows not divisible into segments of {seg}",
                x.rows()
            )));
        }
        let (b, c) = (x.rows() / seg, x.cols());
        let mut v = Mat::zeros(b, c);
        let mut arg = vec![0usize; b * c];
        for bi in 0..b {
            let base = bi * seg;
            v.row_mut(bi).copy_from_slice(x.row(base));
            for t in 1..seg {
                let row = x.row(base + t);
                for j in 0..c {
                    if row[j] > v[(bi, j)] {
                        v[(bi, j)] = row[j];
                        arg[bi * c + j] = t;
                    }
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::SegmentMax(a, arg), rg))
    }

    /// Row-wise log-sum-exp as an N×1 column.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out: Vec<f64> = (0..x.rows()).map(|r| lse(x.row(r))).collect();
        let rg = self.rg(a);
        self.push(Mat::column(&out), Op::LogSumExp(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(v, Op::Log(a), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(v, Op::Sqrt(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(v, Op::Square(a), rg)
    }

    /// `max(x, floor)` elementwise; zero gradient where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        let rg = self.rg(a);
        self.push(v, Op::ClampMin(a, floor), rg)
    }

    /// Mean of all entries as a 1×1 node.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.sum() / x.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Mat::scalar(m), Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Mat::scalar(s), Op::Sum(a), rg)
    }

    /// Per-row sums as an N×1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Mat::column(&out), Op::RowSum(a), rg)
    }

    /// `out[i] = a[i, cols[i]]` as an N×1 column.
    pub fn pick(&mut self, a: Var, cols: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if cols.len() != x.rows() || cols.iter().any(|&c| c >= x.cols()) {
            return Err(Error::Domain(format!(
                "pick: {} indices for a {}x{} matrix",
                cols.len(),
                x.rows(),
                x.cols()
            )));
        }
        let out: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| x[(r, c)]).collect();
        let rg = self.rg(a);
        Ok(self.push(Mat::column(&out), Op::Pick(a, cols), rg))
    }

    /// Gathers rows (repeats allowed).
    pub fn select_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::Domain(format!(
                "select_rows: row {bad} out of range for {} rows",
                x.rows()
            )));
        }
        let v = x.select_rows(&rows);
        let rg = self.rg(a);
        Ok(self.push(v, Op::SelectRows(a, rows), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let m = lse(row);
            for e in row.iter_mut() {
                *e = (*e - m).exp();
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::SoftmaxRows(a), rg)
    }

    /// Mean binary cross-entropy between logits `a` and 0/1 `targets`,
    /// computed in the overflow-safe softplus form.
    pub fn bce_with_logits(&mut self, a: Var, targets: &Mat) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", x, targets));
        }
        let total: f64 = x
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum();
        let v = Mat::scalar(total / x.len().max(1) as f64);
        let rg = self.rg(a);
        Ok(self.push(v, Op::BceLogits(a, targets.clone()), rg))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::Domain(format!(
                "backward: root must be 1x1, got {}x{}",
                rv.rows(),
                rv.cols()
            )));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Mat>> = vec![None; n];
        grads[root.0] = Some(Mat::scalar(1.0));
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes[..n].iter().map(|nd| nd.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Mat| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_t(val(*b)).unwrap());
                }
                if self.rg(*b) {
                    acc(*b, val(*a).t_matmul(g).unwrap());
                }
            }
            Op::MatMulT(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul(val(*b)).unwrap());
                }
                if self.rg(*b) {
                    acc(*b, g.t_matmul(val(*a)).unwrap());
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.rg(*row) {
                    let mut s = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (si, gi) in s.iter_mut().zip(g.row(r)) {
                            *si += gi;
                        }
                    }
                    acc(*row, Mat::from_vec(1, g.cols(), s).unwrap());
                }
            }
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, |x, y| x * y)),
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::RowL2Normalize(a, norms) => {
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let n = norms[r];
                    let yr = y.row(r);
                    let dr = d.row_mut(r);
                    if n > EPS {
                        let proj = crate::numcore::dot(yr, dr);
                        for (di, yi) in dr.iter_mut().zip(yr) {
                            *di = (*di - yi * proj) / n;
                        }
                    } else {
                        for di in dr.iter_mut() {
                            *di /= EPS;
                        }
                    }
                }
                acc(*a, d);
            }
            Op::RowwiseMax(a, arg) => {
                let x = val(*a);
                let mut d = Mat::zeros(x.rows(), x.cols());
                for (r, &c) in arg.iter().enumerate() {
                    d[(r, c)] = g[(r, 0)];
                }
                acc(*a, d);
            }
            Op::SegmentMax(a, arg) => {
                let x = val(*a);
                let (b, c) = g.shape();
                let seg = x.rows() / b.max(1);
                let mut d = Mat::zeros(x.rows(), x.cols());
                for bi in 0..b {
                    for j in 0..c {
                        let t = arg[bi * c + j];
                        d[(bi * seg + t, j)] = g[(bi, j)];
                    }
                }
                acc(*a, d);
            }
            Op::LogSumExp(a) => {
                let x = val(*a);
                let mut d = x.clone();
                for r in 0..d.rows() {
                    let m = node.value[(r, 0)];
                    let gr = g[(r, 0)];
                    for e in d.row_mut(r) {
                        *e = gr * (*e - m).exp();
                    }
                }
                acc(*a, d);
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |d, s| d * s * (1.0 - s))),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |d, y| d * y)),
            Op::Log(a) => acc(*a, g.zip_map(val(*a), |d, x| d / x)),
            Op::Sqrt(a) => acc(*a, g.zip_map(&node.value, |d, y| d / (2.0 * y))),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |d, x| 2.0 * x * d)),
            Op::ClampMin(a, floor) => {
                let f = *floor;
                acc(*a, g.zip_map(val(*a), |d, x| if x > f { d } else { 0.0 }))
            }
            Op::Mean(a) => {
                let x = val(*a);
                acc(*a, Mat::filled(x.rows(), x.cols(), g[(0, 0)] / x.len().max(1) as f64));
            }
            Op::Sum(a) => {
                let x = val(*a);
                acc(*a, Mat::filled(x.rows(), x.cols(), g[(0, 0)]));
            }
            Op::RowSum(a) => {
                let x = val(*a);
                let mut d = Mat::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    d.row_mut(r).fill(g[(r, 0)]);
                }
                acc(*a, d);
            }
            Op::Pick(a, cols) => {
                let x = val(*a);
                let mut d = Mat::zeros(x.rows(), x.cols());
                for (r, &c) in cols.iter().enumerate() {
                    d[(r, c)] = g[(r, 0)];
                }
                acc(*a, d);
            }
            Op::SelectRows(a, rows) => {
                let x = val(*a);
                let mut d = Mat::zeros(x.rows(), x.cols());
                for (i, &r) in rows.iter().enumerate() {
                    for (di, gi) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                        *di += gi;
                    }
                }
                acc(*a, d);
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..d.rows() {
                    let yr = y.row(r);
                    let dr = d.row_mut(r);
                    let s = crate::numcore::dot(yr, dr);
                    for (di, yi) in dr.iter_mut().zip(yr) {
                        *di = yi * (*di - s);
                    }
                }
                acc(*a, d);
            }
            Op::BceLogits(a, t) => {
                let x = val(*a);
                let scale = g[(0, 0)] / x.len().max(1) as f64;
                acc(*a, x.zip_map(t, |z, y| (sigmoid(z) - y) * scale));
            }
        }
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

pub fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
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

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

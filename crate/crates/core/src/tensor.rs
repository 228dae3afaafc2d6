//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! are methods on the tape that take [`Tensor`] handles, record the op, and
//! return a handle to the result. Because nodes can only reference earlier
//! nodes, the tape is topologically ordered by construction and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use glcn_core::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
//! let loss = tape.frobenius_sq(x);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.value(loss).item().unwrap(), 30.0);
//! assert_eq!(tape.grad(x).unwrap().as_slice(), &[2.0, 4.0, 6.0, 8.0]);
//! ```
//!
//! Nodes may carry a [`Support`]: a guarantee that entries outside the
//! pattern are identically zero for every input. Matrix products with such a
//! left operand only touch the pattern, in the forward pass and in the
//! gradient of the left operand. Leaf gradients stay exact; the stored
//! gradient of the annotated node itself is only materialized on its pattern.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Support};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Hadamard(usize, usize),
    Relu(usize),
    Log(usize),
    LogClamped(usize, f64),
    Transpose(usize),
    RowSum(usize),
    Sum(usize),
    FrobeniusSq(usize),
    RowSoftmax(usize),
    PairwiseAbsDiffProject { x: usize, weights: usize },
    PairwiseSqDist(usize),
}

#[derive(Debug)]
struct Node {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
    support: Option<Arc<Support>>,
}

/// Recorded computation for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Dense kernels are used once a pattern is denser than this.
const SPARSE_DENSITY_CUTOFF: f64 = 0.25;

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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Tensor {
        self.push_shared(Arc::new(value), op, requires_grad, None)
    }

    fn push_shared(
        &mut self,
        value: Arc<Matrix>,
        op: Op,
        requires_grad: bool,
        support: Option<Arc<Support>>,
    ) -> Tensor {
        let t = Tensor {
            id: self.nodes.len(),
            rows: value.rows(),
            cols: value.cols(),
        };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
            support,
        });
        t
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// A trainable input; gradients are accumulated for it.
    pub fn leaf(&mut self, value: Matrix) -> Tensor {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input with no gradient.
    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.push(value, Op::Constant, false)
    }

    /// A fixed input shared with the caller, optionally tagged with its
    /// nonzero pattern.
    pub fn constant_shared(&mut self, value: Arc<Matrix>, support: Option<Arc<Support>>) -> Tensor {
        if let Some(s) = &support {
            debug_assert_eq!(s.shape(), value.shape());
        }
        self.push_shared(value, Op::Constant, false, support)
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.id].value
    }

    /// Accumulated gradient of the node, if any backward pass reached it.
    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes[t.id].grad.as_ref()
    }

    pub fn support(&self, t: Tensor) -> Option<&Arc<Support>> {
        self.nodes[t.id].support.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op,
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let av = &self.nodes[a.id].value;
        let bv = &self.nodes[b.id].value;
        let mut out = Matrix::zeros(a.rows, b.cols);
        match sparse_support(&self.nodes[a.id]) {
            Some(s) => spmm(av, s, bv, &mut out),
            None => gemm(av, false, bv, false, &mut out),
        }
        let rg = self.needs(&[a.id, b.id]);
        Ok(self.push(out, Op::MatMul(a.id, b.id), rg))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("add", a, b)?;
        let out = zip_map(&self.nodes[a.id].value, &self.nodes[b.id].value, |x, y| x + y);
        let rg = self.needs(&[a.id, b.id]);
        Ok(self.push(out, Op::Add(a.id, b.id), rg))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(&self.nodes[a.id].value, &self.nodes[b.id].value, |x, y| x - y);
        let rg = self.needs(&[a.id, b.id]);
        Ok(self.push(out, Op::Sub(a.id, b.id), rg))
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let out = self.nodes[a.id].value.map(|x| c * x);
        let rg = self.needs(&[a.id]);
        self.push(out, Op::Scale(a.id, c), rg)
    }

    pub fn hadamard(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("hadamard", a, b)?;
        let out = zip_map(&self.nodes[a.id].value, &self.nodes[b.id].value, |x, y| x * y);
        let rg = self.needs(&[a.id, b.id]);
        Ok(self.push(out, Op::Hadamard(a.id, b.id), rg))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let out = self.nodes[a.id].value.map(|x| x.max(0.0));
        let rg = self.needs(&[a.id]);
        self.push(out, Op::Relu(a.id), rg)
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        if let Some(bad) = v.as_slice().iter().find(|&&x| x.is_nan() || x <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let out = v.map(f64::ln);
        let rg = self.needs(&[a.id]);
        Ok(self.push(out, Op::Log(a.id), rg))
    }

    /// `ln(max(x, floor))`. Entries at or below the floor get no gradient.
    pub fn log_clamped(&mut self, a: Tensor, floor: f64) -> Tensor {
        let out = self.nodes[a.id].value.map(|x| x.max(floor).ln());
        let rg = self.needs(&[a.id]);
        self.push(out, Op::LogClamped(a.id, floor), rg)
    }

    pub fn transpose(&mut self, a: Tensor) -> Tensor {
        let out = self.nodes[a.id].value.transpose();
        let rg = self.needs(&[a.id]);
        self.push(out, Op::Transpose(a.id), rg)
    }

    /// Per-row sums as an `n x 1` column.
    pub fn row_sum(&mut self, a: Tensor) -> Tensor {
        let out = Matrix::column(&self.nodes[a.id].value.row_sums());
        let rg = self.needs(&[a.id]);
        self.push(out, Op::RowSum(a.id), rg)
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let out = Matrix::scalar(self.nodes[a.id].value.sum());
        let rg = self.needs(&[a.id]);
        self.push(out, Op::Sum(a.id), rg)
    }

    /// Squared Frobenius norm as a 1x1 tensor.
    pub fn frobenius_sq(&mut self, a: Tensor) -> Tensor {
        let s = self.nodes[a.id].value.as_slice().iter().map(|x| x * x).sum();
        let rg = self.needs(&[a.id]);
        self.push(Matrix::scalar(s), Op::FrobeniusSq(a.id), rg)
    }

    /// Row-wise softmax, optionally weighted by a nonnegative mask:
    /// `out_ij = m_ij exp(a_ij - max_i) / sum_j m_ij exp(a_ij - max_i)`,
    /// where the max runs over the row's support. A row whose mask is all
    /// zero is an error. When a mask is given, the result carries the mask's
    /// support.
    pub fn row_softmax(&mut self, a: Tensor, mask: Option<&WeightMask>) -> Result<Tensor> {
        let av = Arc::clone(&self.nodes[a.id].value);
        let (n, m) = av.shape();
        let mut out = Matrix::zeros(n, m);
        match mask {
            None => {
                for i in 0..n {
                    softmax_row(av.row(i), out.row_mut(i));
                }
            }
            Some(mask) => {
                if mask.values.shape() != (n, m) {
                    return Err(Error::Dimension {
                        op: "row_softmax",
                        lhs: (n, m),
                        rhs: mask.values.shape(),
                    });
                }
                for i in 0..n {
                    let cols = mask.support.row(i);
                    if cols.is_empty() {
                        return Err(Error::DegenerateRow { row: i });
                    }
                    let row = av.row(i);
                    let mrow = mask.values.row(i);
                    let max = cols.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
                    let orow = out.row_mut(i);
                    let mut total = 0.0;
                    for &j in cols {
                        let e = mrow[j] * (row[j] - max).exp();
                        orow[j] = e;
                        total += e;
                    }
                    for &j in cols {
                        orow[j] /= total;
                    }
                }
            }
        }
        let rg = self.needs(&[a.id]);
        let support = mask.map(|m| Arc::clone(&m.support));
        Ok(self.push_shared(Arc::new(out), Op::RowSoftmax(a.id), rg, support))
    }

    /// `out_ij = relu(sum_k w_k |x_ik - x_jk|)` for an `n x d` input and a
    /// `d x 1` weight column. With a support, entries outside it are 0 and
    /// are not computed. The diagonal is always 0.
    pub fn pairwise_abs_diff_project(
        &mut self,
        x: Tensor,
        weights: Tensor,
        support: Option<Arc<Support>>,
    ) -> Result<Tensor> {
        let (n, d) = x.shape();
        if weights.shape() != (d, 1) {
            return Err(Error::Dimension {
                op: "pairwise_abs_diff_project",
                lhs: x.shape(),
                rhs: weights.shape(),
            });
        }
        check_pair_support("pairwise_abs_diff_project", n, support.as_deref())?;
        let xv = &self.nodes[x.id].value;
        let w = self.nodes[weights.id].value.as_slice();
        let score = |i: usize, j: usize| -> f64 {
            let (xi, xj) = (xv.row(i), xv.row(j));
            let mut s = 0.0;
            for k in 0..d {
                s += w[k] * (xi[k] - xj[k]).abs();
            }
            s.max(0.0)
        };
        let mut out = Matrix::zeros(n, n);
        for_each_pair(n, support.as_deref(), |i, j, mirrored| {
            let s = score(i, j);
            out.set(i, j, s);
            if mirrored {
                out.set(j, i, s);
            }
        });
        let rg = self.needs(&[x.id, weights.id]);
        Ok(self.push_shared(
            Arc::new(out),
            Op::PairwiseAbsDiffProject {
                x: x.id,
                weights: weights.id,
            },
            rg,
            support,
        ))
    }

    /// `out_ij = ||x_i - x_j||^2`, restricted to `support` when given.
    pub fn pairwise_sq_dist(&mut self, x: Tensor, support: Option<Arc<Support>>) -> Result<Tensor> {
        let (n, _) = x.shape();
        check_pair_support("pairwise_sq_dist", n, support.as_deref())?;
        let xv = &self.nodes[x.id].value;
        let mut out = Matrix::zeros(n, n);
        for_each_pair(n, support.as_deref(), |i, j, mirrored| {
            let s: f64 = xv.row(i).iter().zip(xv.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            out.set(i, j, s);
            if mirrored {
                out.set(j, i, s);
            }
        });
        let rg = self.needs(&[x.id]);
        Ok(self.push_shared(Arc::new(out), Op::PairwiseSqDist(x.id), rg, support))
    }

    /// Accumulates `d loss / d node` into every node that requires a
    /// gradient. Calling it twice without [`Tape::zero_grad`] adds up.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.shape() != (1, 1) {
            return Err(Error::NotScalar {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        let mut grads: Vec<Option<Matrix>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            match &mut self.nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[id];
        let val = |i: usize| -> &Matrix { &self.nodes[i].value };
        let rg = |i: usize| self.nodes[i].requires_grad;
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                if rg(a) {
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    match sparse_support(&self.nodes[a]) {
                        Some(s) => sampled_abt(g, bv, s, &mut ga),
                        None => gemm(g, false, bv, true, &mut ga),
                    }
                    accumulate(grads, a, ga);
                }
                if rg(b) {
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    match sparse_support(&self.nodes[a]) {
                        Some(s) => spmm_t(av, s, g, &mut gb),
                        None => gemm(av, true, g, false, &mut gb),
                    }
                    accumulate(grads, b, gb);
                }
            }
            Op::Add(a, b) => {
                if rg(a) {
                    accumulate(grads, a, g.clone());
                }
                if rg(b) {
                    accumulate(grads, b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if rg(a) {
                    accumulate(grads, a, g.clone());
                }
                if rg(b) {
                    accumulate(grads, b, g.map(|x| -x));
                }
            }
            Op::Scale(a, c) => accumulate(grads, a, g.map(|x| c * x)),
            Op::Hadamard(a, b) => {
                if rg(a) {
                    accumulate(grads, a, zip_map(g, val(b), |x, y| x * y));
                }
                if rg(b) {
                    accumulate(grads, b, zip_map(g, val(a), |x, y| x * y));
                }
            }
            Op::Relu(a) => {
                let out = zip_map(g, val(a), |gx, x| if x > 0.0 { gx } else { 0.0 });
                accumulate(grads, a, out);
            }
            Op::Log(a) => accumulate(grads, a, zip_map(g, val(a), |gx, x| gx / x)),
            Op::LogClamped(a, floor) => {
                let out = zip_map(g, val(a), |gx, x| if x > floor { gx / x } else { 0.0 });
                accumulate(grads, a, out);
            }
            Op::Transpose(a) => accumulate(grads, a, g.transpose()),
            Op::RowSum(a) => {
                let av = val(a);
                let mut out = Matrix::zeros(av.rows(), av.cols());
                for i in 0..av.rows() {
                    let gi = g.get(i, 0);
                    out.row_mut(i).fill(gi);
                }
                accumulate(grads, a, out);
            }
            Op::Sum(a) => {
                let av = val(a);
                accumulate(grads, a, Matrix::filled(av.rows(), av.cols(), g.as_slice()[0]));
            }
            Op::FrobeniusSq(a) => {
                let c = 2.0 * g.as_slice()[0];
                accumulate(grads, a, val(a).map(|x| c * x));
            }
            Op::RowSoftmax(a) => {
                let out = &node.value;
                let mut ga = Matrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let (orow, grow) = (out.row(i), g.row(i));
                    let garow = ga.row_mut(i);
                    match &node.support {
                        Some(s) => {
                            let cols = s.row(i);
                            let dot: f64 = cols.iter().map(|&j| orow[j] * grow[j]).sum();
                            for &j in cols {
                                garow[j] = orow[j] * (grow[j] - dot);
                            }
                        }
                        None => {
                            let dot: f64 = orow.iter().zip(grow).map(|(o, g)| o * g).sum();
                            for j in 0..orow.len() {
                                garow[j] = orow[j] * (grow[j] - dot);
                            }
                        }
                    }
                }
                accumulate(grads, a, ga);
            }
            Op::PairwiseAbsDiffProject { x, weights } => {
                let (xv, wv, out) = (val(x), val(weights), &node.value);
                let (n, d) = xv.shape();
                let w = wv.as_slice();
                let mut gx = Matrix::zeros(n, d);
                let mut gw = vec![0.0; d];
                for_each_pair(n, node.support.as_deref(), |i, j, mirrored| {
                    if out.get(i, j) <= 0.0 {
                        return;
                    }
                    let gij = if mirrored {
                        g.get(i, j) + g.get(j, i)
                    } else {
                        g.get(i, j)
                    };
                    if gij == 0.0 {
                        return;
                    }
                    for k in 0..d {
                        let diff = xv.get(i, k) - xv.get(j, k);
                        gw[k] += gij * diff.abs();
                        let t = gij * w[k] * sign(diff);
                        gx.row_mut(i)[k] += t;
                        gx.row_mut(j)[k] -= t;
                    }
                });
                if rg(x) {
                    accumulate(grads, x, gx);
                }
                if rg(weights) {
                    accumulate(grads, weights, Matrix::column(&gw));
                }
            }
            Op::PairwiseSqDist(x) => {
                let xv = val(x);
                let (n, d) = xv.shape();
                let mut gx = Matrix::zeros(n, d);
                for_each_pair(n, node.support.as_deref(), |i, j, mirrored| {
                    let gij = if mirrored {
                        g.get(i, j) + g.get(j, i)
                    } else {
                        g.get(i, j)
                    };
                    if gij == 0.0 {
                        return;
                    }
                    for k in 0..d {
                        let t = 2.0 * gij * (xv.get(i, k) - xv.get(j, k));
                        gx.row_mut(i)[k] += t;
                        gx.row_mut(j)[k] -= t;
                    }
                });
                accumulate(grads, x, gx);
            }
        }
    }
}

/// Nonnegative weights for a masked softmax together with their support.
#[derive(Clone, Debug)]
pub struct WeightMask {
    values: Arc<Matrix>,
    support: Arc<Support>,
}

impl WeightMask {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "mask weight {v} is not a finite nonnegative number"
            )));
        }
        let support = Arc::new(Support::from_nonzeros(&values));
        Ok(Self {
            values: Arc::new(values),
            support,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn support(&self) -> &Arc<Support> {
        &self.support
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shapes checked by caller")
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sparse_support(node: &Node) -> Option<&Support> {
    node.support.as_deref().filter(|s| s.density() < SPARSE_DENSITY_CUTOFF)
}

fn check_pair_support(op: &'static str, n: usize, support: Option<&Support>) -> Result<()> {
    match support {
        Some(s) if s.shape() != (n, n) => Err(Error::Dimension {
            op,
            lhs: (n, n),
            rhs: s.shape(),
        }),
        _ => Ok(()),
    }
}

/// Visits off-diagonal pairs. Without a support, each unordered pair is
/// visited once with `mirrored = true`; with one, each listed entry is
/// visited on its own.
fn for_each_pair(n: usize, support: Option<&Support>, mut f: impl FnMut(usize, usize, bool)) {
    match support {
        None => {
            for i in 0..n {
                for j in (i + 1)..n {
                    f(i, j, true);
                }
            }
        }
        Some(s) => {
            for i in 0..n {
                for &j in s.row(i) {
                    if j != i {
                        f(i, j, false);
                    }
                }
            }
        }
    }
}

/// `out += A * B` reading `A` only on its support.
fn spmm(a: &Matrix, s: &Support, b: &Matrix, out: &mut Matrix) {
    for i in 0..a.rows() {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for &k in s.row(i) {
            let aik = arow[k];
            for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                *o += aik * bv;
            }
        }
    }
}

/// `out += A^T * G` reading `A` only on its support.
fn spmm_t(a: &Matrix, s: &Support, g: &Matrix, out: &mut Matrix) {
    for i in 0..a.rows() {
        let arow = a.row(i);
        let grow = g.row(i);
        for &k in s.row(i) {
            let aik = arow[k];
            for (o, &gv) in out.row_mut(k).iter_mut().zip(grow) {
                *o += aik * gv;
            }
        }
    }
}

/// `out_ij = G_i . B_j` for `(i, j)` in the support only.
fn sampled_abt(g: &Matrix, b: &Matrix, s: &Support, out: &mut Matrix) {
    for i in 0..g.rows() {
        let grow = g.row(i);
        for &j in s.row(i) {
            let v: f64 = grow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
            out.set(i, j, v);
        }
    }
}

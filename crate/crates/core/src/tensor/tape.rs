use std::sync::Arc;

use super::kernels::gemm;
use super::sparse::CsrMatrix;
use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn from_index_for_tests(i: usize) -> Var {
        Var(i)
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Exp(Var),
    Ln(Var),
    Scale(Var, f64),
    Offset(Var),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    TileRows(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ShiftRows(Var, usize),
    FoldRows(Var, usize),
    SoftmaxRows(Var, f64),
    LogSoftmaxRows(Var, f64),
    Spmm(Arc<CsrMatrix>, Var),
    Reshape(Var),
}

struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and [`Tape::backward`] simply walks the record in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the tape's leaves.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` if the leaf does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `t`'s gradient buffer.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn rows_of(shape: Shape, op: &'static str) -> Result<(usize, usize)> {
    shape
        .as_rows()
        .ok_or_else(|| Error::dim(op, shape, "rank ≤ 2"))
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

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.numel(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Records a copy of `t`; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a copy of `t` as a differentiable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape(), t.data().to_vec(), Op::Leaf, true)
    }

    /// Records `t` as a constant without copying.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Constant copy of `v`; gradients never flow through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (shape, value) = (n.shape, n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::from_shape(n.shape, n.value.clone()).expect("tape node shape is consistent")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k) = sa
            .matrix_dims()
            .ok_or_else(|| Error::dim("matmul", sa, sb))?;
        let (k2, n) = sb
            .matrix_dims()
            .ok_or_else(|| Error::dim("matmul", sa, sb))?;
        if k != k2 {
            return Err(Error::dim("matmul", sa, sb));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.node(a).value,
            false,
            &self.node(b).value,
            false,
            0.0,
            &mut out,
        );
        let g = self.grad_any(&[a, b]);
        Ok(self.push(Shape::matrix(m, n), out, Op::MatMul(a, b), g))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(name, sa, sb));
        }
        let out = self
            .node(a)
            .value
            .iter()
            .zip(&self.node(b).value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let g = self.grad_any(&[a, b]);
        Ok(self.push(sa, out, op, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let (shape, g) = (n.shape, n.needs_grad);
        let out = n.value.iter().map(|x| f(*x)).collect();
        self.push(shape, out, op, g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("operand shapes agree with themselves")
    }

    /// `s·a` for a fixed scalar `s`.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| s * x, Op::Scale(a, s))
    }

    /// `a + c` for a fixed scalar `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().sum();
        let g = n.needs_grad;
        self.push(Shape::scalar(), vec![s], Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let g = n.needs_grad;
        self.push(Shape::scalar(), vec![s], Op::Mean(a), g)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = n
            .shape
            .matrix_dims()
            .ok_or_else(|| Error::dim("transpose", n.shape, "rank 2"))?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = n.value[i * c + j];
            }
        }
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(c, r), out, Op::Transpose(a), g))
    }

    /// Stacks `reps` copies of a matrix (or row vector) vertically.
    pub fn tile_rows(&mut self, a: Var, reps: usize) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = rows_of(n.shape, "tile_rows")?;
        let mut out = Vec::with_capacity(reps * r * c);
        for _ in 0..reps {
            out.extend_from_slice(&n.value);
        }
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(reps * r, c), out, Op::TileRows(a), g))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Parameter("concat_cols of zero tensors".into()));
        }
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            dims.push(rows_of(self.shape(p), "concat_cols")?);
        }
        let rows = dims[0].0;
        if let Some(&(r, _)) = dims.iter().find(|(r, _)| *r != rows) {
            return Err(Error::dim("concat_cols", rows, r));
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &(_, c)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.node(p).value[i * c..(i + 1) * c]);
            }
        }
        let g = self.grad_any(parts);
        Ok(self.push(
            Shape::matrix(rows, total),
            out,
            Op::ConcatCols(parts.to_vec()),
            g,
        ))
    }

    /// Rows `[start, start + len)` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = rows_of(n.shape, "slice_rows")?;
        if start + len > r {
            return Err(Error::dim("slice_rows", n.shape, format!("{start}..{}", start + len)));
        }
        let out = n.value[start * c..(start + len) * c].to_vec();
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(len, c), out, Op::SliceRows(a, start), g))
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = rows_of(n.shape, "slice_cols")?;
        if start + len > c {
            return Err(Error::dim("slice_cols", n.shape, format!("{start}..{}", start + len)));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&n.value[i * c + start..i * c + start + len]);
        }
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(r, len), out, Op::SliceCols(a, start), g))
    }

    /// Moves every row down by `k`, filling the first `k` rows with zeros.
    pub fn shift_rows(&mut self, a: Var, k: usize) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = rows_of(n.shape, "shift_rows")?;
        let mut out = vec![0.0; r * c];
        if k < r {
            out[k * c..].copy_from_slice(&n.value[..(r - k) * c]);
        }
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(r, c), out, Op::ShiftRows(a, k), g))
    }

    /// Splits the rows into `parts` equal blocks and lays them side by side:
    /// `[parts·m × c] → [m × parts·c]`.
    pub fn fold_rows(&mut self, a: Var, parts: usize) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = rows_of(n.shape, "fold_rows")?;
        if parts == 0 || r % parts != 0 {
            return Err(Error::dim("fold_rows", n.shape, format!("{parts} parts")));
        }
        let m = r / parts;
        let width = parts * c;
        let mut out = vec![0.0; r * c];
        for p in 0..parts {
            for i in 0..m {
                let src = &n.value[(p * m + i) * c..(p * m + i + 1) * c];
                out[i * width + p * c..i * width + (p + 1) * c].copy_from_slice(src);
            }
        }
        let g = n.needs_grad;
        Ok(self.push(Shape::matrix(m, width), out, Op::FoldRows(a, parts), g))
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let shape = Shape::new(dims)?;
        let n = self.node(a);
        if shape.numel() != n.value.len() {
            return Err(Error::dim("reshape", n.shape, shape));
        }
        let (out, g) = (n.value.clone(), n.needs_grad);
        Ok(self.push(shape, out, Op::Reshape(a), g))
    }

    /// Row-wise softmax of `x / temperature` (a vector is a single row).
    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let n = self.node(a);
        let (_, c) = rows_of(n.shape, "softmax")?;
        let mut out = n.value.clone();
        for row in out.chunks_exact_mut(c.max(1)) {
            softmax_in_place(row, temperature);
        }
        let (shape, g) = (n.shape, n.needs_grad);
        Ok(self.push(shape, out, Op::SoftmaxRows(a, temperature), g))
    }

    /// Row-wise log-softmax of `x / temperature` via log-sum-exp.
    pub fn log_softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let n = self.node(a);
        let (_, c) = rows_of(n.shape, "log_softmax")?;
        let mut out = n.value.clone();
        for row in out.chunks_exact_mut(c.max(1)) {
            log_softmax_in_place(row, temperature);
        }
        let (shape, g) = (n.shape, n.needs_grad);
        Ok(self.push(shape, out, Op::LogSoftmaxRows(a, temperature), g))
    }

    /// Sparse-dense product `M·X`, applied blockwise when `X` stacks several
    /// `[n×f]` blocks vertically.
    pub fn spmm(&mut self, m: &Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let nx = self.node(x);
        let (r, f) = nx
            .shape
            .matrix_dims()
            .ok_or_else(|| Error::dim("spmm", format!("{0}×{0} operator", m.n()), nx.shape))?;
        if m.n() == 0 || r % m.n() != 0 {
            return Err(Error::dim(
                "spmm",
                format!("{0}×{0} operator", m.n()),
                nx.shape,
            ));
        }
        let mut out = vec![0.0; r * f];
        m.apply(&nx.value, f, &mut out);
        let g = nx.needs_grad;
        Ok(self.push(Shape::matrix(r, f), out, Op::Spmm(Arc::clone(m), x), g))
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to every
    /// differentiable leaf. The tape is left untouched, so calling this twice
    /// yields the same table twice.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                ln.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !ln.needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a).matrix_dims().unwrap();
                let n = self.shape(*b).cols();
                if let Some(da) = self.slot(grads, *a) {
                    gemm(m, n, k, g, false, &self.node(*b).value, true, 1.0, da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm(k, m, n, &self.node(*a).value, true, g, false, 1.0, db);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    add_into(da, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    add_into(db, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    add_into(da, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    db.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                if self.node(*a).needs_grad {
                    let bv = &self.node(*b).value;
                    let da = self.slot(grads, *a).unwrap();
                    for ((d, g), b) in da.iter_mut().zip(g).zip(bv) {
                        *d += g * b;
                    }
                }
                if self.node(*b).needs_grad {
                    let av = &self.node(*a).value;
                    let db = self.slot(grads, *b).unwrap();
                    for ((d, g), a) in db.iter_mut().zip(g).zip(av) {
                        *d += g * a;
                    }
                }
            }
            Op::Relu(a) => self.pointwise(grads, *a, g, |x, _| if x > 0.0 { 1.0 } else { 0.0 }, y),
            Op::Sigmoid(a) => self.pointwise(grads, *a, g, |_, y| y * (1.0 - y), y),
            Op::Tanh(a) => self.pointwise(grads, *a, g, |_, y| 1.0 - y * y, y),
            Op::Abs(a) => self.pointwise(
                grads,
                *a,
                g,
                |x, _| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                },
                y,
            ),
            Op::Exp(a) => self.pointwise(grads, *a, g, |_, y| y, y),
            Op::Ln(a) => self.pointwise(grads, *a, g, |x, _| 1.0 / x, y),
            Op::Scale(a, s) => {
                if let Some(da) = self.slot(grads, *a) {
                    da.iter_mut().zip(g).for_each(|(d, g)| *d += s * g);
                }
            }
            Op::Offset(a) | Op::Reshape(a) => {
                if let Some(da) = self.slot(grads, *a) {
                    add_into(da, g);
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.slot(grads, *a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(da) = self.slot(grads, *a) {
                    let s = g[0] / da.len() as f64;
                    da.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.shape(*a).matrix_dims().unwrap();
                if let Some(da) = self.slot(grads, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::TileRows(a) => {
                if let Some(da) = self.slot(grads, *a) {
                    let len = da.len();
                    for block in g.chunks_exact(len) {
                        add_into(da, block);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.shape.cols();
                let mut off = 0;
                for &p in parts {
                    let c = self.shape(p).as_rows().unwrap().1;
                    if let Some(dp) = self.slot(grads, p) {
                        for (i, row) in dp.chunks_exact_mut(c.max(1)).enumerate() {
                            add_into(row, &g[i * total + off..i * total + off + c]);
                        }
                    }
                    off += c;
                }
            }
            Op::SliceRows(a, start) => {
                let c = node.shape.cols();
                if let Some(da) = self.slot(grads, *a) {
                    add_into(&mut da[start * c..start * c + g.len()], g);
                }
            }
            Op::SliceCols(a, start) => {
                let len = node.shape.cols();
                let c = self.shape(*a).as_rows().unwrap().1;
                if let Some(da) = self.slot(grads, *a) {
                    for (i, grow) in g.chunks_exact(len.max(1)).enumerate() {
                        add_into(&mut da[i * c + start..i * c + start + len], grow);
                    }
                }
            }
            Op::ShiftRows(a, k) => {
                let (r, c) = node.shape.matrix_dims().unwrap();
                if let Some(da) = self.slot(grads, *a) {
                    if *k < r {
                        add_into(&mut da[..(r - k) * c], &g[k * c..]);
                    }
                }
            }
            Op::FoldRows(a, parts) => {
                let (r, c) = self.shape(*a).matrix_dims().unwrap();
                let m = r / parts;
                let width = parts * c;
                if let Some(da) = self.slot(grads, *a) {
                    for p in 0..*parts {
                        for i in 0..m {
                            add_into(
                                &mut da[(p * m + i) * c..(p * m + i + 1) * c],
                                &g[i * width + p * c..i * width + (p + 1) * c],
                            );
                        }
                    }
                }
            }
            Op::SoftmaxRows(a, t) => {
                let c = node.shape.as_rows().unwrap().1.max(1);
                if let Some(da) = self.slot(grads, *a) {
                    for ((drow, grow), yrow) in da
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(y.chunks_exact(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (g - dot) / t;
                        }
                    }
                }
            }
            Op::LogSoftmaxRows(a, t) => {
                let c = node.shape.as_rows().unwrap().1.max(1);
                if let Some(da) = self.slot(grads, *a) {
                    for ((drow, grow), yrow) in da
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(y.chunks_exact(c))
                    {
                        let gsum: f64 = grow.iter().sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += (g - y.exp() * gsum) / t;
                        }
                    }
                }
            }
            Op::Spmm(m, x) => {
                let f = node.shape.cols();
                if let Some(dx) = self.slot(grads, *x) {
                    m.apply_transpose_acc(g, f, dx);
                }
            }
        }
    }

    /// Gradient buffer of `v`, allocated on first touch; `None` when `v` is
    /// not differentiable.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        let n = self.node(v);
        if !n.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
    }

    fn pointwise(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: Var,
        g: &[f64],
        local: impl Fn(f64, f64) -> f64,
        y: &[f64],
    ) {
        let x = &self.node(a).value;
        if let Some(da) = self.slot(grads, a) {
            for (((d, g), x), y) in da.iter_mut().zip(g).zip(x).zip(y) {
                *d += g * local(*x, *y);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("temperature must be positive, got {t}")))
    }
}

/// Softmax of `row / t` with max subtraction.
pub(crate) fn softmax_in_place(row: &mut [f64], t: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = ((*x - max) / t).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

/// Log-softmax of `row / t` via log-sum-exp.
pub(crate) fn log_softmax_in_place(row: &mut [f64], t: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = row.iter().map(|&x| ((x - max) / t).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|x| *x = (*x - max) / t - lse);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

//! Dense f64 tensors (rank ≤ 3) and a reverse-mode differentiation tape.
//!
//! Parameters live in [`Tensor`]s owned by the models. A forward pass copies
//! them onto a [`Tape`] as leaves, records every primitive operation, and
//! [`Tape::backward`] returns a [`Gradients`] table that can be accumulated
//! back into the owning tensors.
//!
//! There is no broadcasting. Row-vector biases are expanded with
//! [`Tape::tile_rows`] before they are added.

mod gradcheck;
mod kernels;
mod sparse;
mod tape;


pub use gradcheck::grad_check;
pub use sparse::CsrMatrix;
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::{log_softmax_in_place, softmax_in_place};

use std::fmt;

use crate::error::{Error, Result};

/// Tensor shape of rank 0 to 3.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: [usize; 3],
    rank: usize,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() > 3 {
            return Err(Error::Parameter(format!(
                "tensor rank {} exceeds the maximum of 3",
                dims.len()
            )));
        }
        let mut d = [1; 3];
        d[..dims.len()].copy_from_slice(dims);
        Ok(Shape {
            dims: d,
            rank: dims.len(),
        })
    }

    pub const fn scalar() -> Self {
        Shape {
            dims: [1; 3],
            rank: 0,
        }
    }

    pub const fn vector(n: usize) -> Self {
        Shape {
            dims: [n, 1, 1],
            rank: 1,
        }
    }

    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape {
            dims: [rows, cols, 1],
            rank: 2,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }

    /// Rows and columns of a rank-2 shape.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        (self.rank == 2).then_some((self.dims[0], self.dims[1]))
    }

    /// Column count when viewed as a matrix (see `as_rows`).
    pub(crate) fn cols(&self) -> usize {
        self.as_rows().map_or(0, |(_, c)| c)
    }

    /// Interprets rank 0/1/2 shapes as matrices; a vector is a single row.
    pub(crate) fn as_rows(&self) -> Option<(usize, usize)> {
        match self.rank {
            0 => Some((1, 1)),
            1 => Some((1, self.dims[0])),
            2 => Some((self.dims[0], self.dims[1])),
            _ => None,
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.dims().iter().enumerate() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// Dense row-major f64 tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        Self::from_shape(shape, data)
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::dim("tensor construction", shape, data.len()));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        Ok(Self::zeros_like_shape(shape))
    }

    pub(crate) fn zeros_like_shape(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::vector(values.len()),
            data: values,
            requires_grad: false,
            grad: None,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(
                    "from_rows",
                    format!("row 0 has {cols} columns"),
                    format!("row {i} has {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_shape(Shape::matrix(rows.len(), cols), data)
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor {
            shape: Shape::matrix(n, n),
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::dim("accumulate_grad", self.shape, g.len()));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Element at `(row, col)` of a matrix.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.shape.as_rows().expect("at() on a rank-3 tensor");
        self.data[row * cols + col]
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::dim("reshape", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Fails with a numeric error if any value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "{what}: non-finite value {} at flat index {i}",
                self.data[i]
            ))),
        }
    }

    /// Transposed copy of a matrix.
    pub fn transposed(&self) -> Result<Self> {
        let (r, c) = self
            .shape
            .matrix_dims()
            .ok_or_else(|| Error::dim("transpose", self.shape, "rank 2"))?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_shape(Shape::matrix(c, r), out)
    }
}

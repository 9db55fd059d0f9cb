use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse row form.
///
/// Applied by the tape to row-stacked inputs: an input with `b·n` rows is
/// treated as `b` independent `[n×f]` blocks (a block-diagonal product).
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::Data(format!(
                    "sparse entry ({r}, {c}) outside a {n}×{n} matrix"
                )));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[i * self.n + j] += v;
            }
        }
        out
    }

    /// `out = M·x` blockwise over `x.len() / (n·f)` stacked blocks.
    pub(crate) fn apply(&self, x: &[f64], f: usize, out: &mut [f64]) {
        let block = self.n * f;
        for (xb, ob) in x.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            for i in 0..self.n {
                let orow = &mut ob[i * f..(i + 1) * f];
                orow.fill(0.0);
                for (j, v) in self.row(i) {
                    let xrow = &xb[j * f..(j + 1) * f];
                    orow.iter_mut().zip(xrow).for_each(|(o, x)| *o += v * x);
                }
            }
        }
    }

    /// `out += Mᵀ·g` blockwise.
    pub(crate) fn apply_transpose_acc(&self, g: &[f64], f: usize, out: &mut [f64]) {
        let block = self.n * f;
        for (gb, ob) in g.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            for i in 0..self.n {
                let grow = &gb[i * f..(i + 1) * f];
                for (j, v) in self.row(i) {
                    let orow = &mut ob[j * f..(j + 1) * f];
                    orow.iter_mut().zip(grow).for_each(|(o, g)| *o += v * g);
                }
            }
        }
    }
}

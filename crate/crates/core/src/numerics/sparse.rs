use crate::error::{Error, Result};
use crate::exec;

use super::DenseMatrix;

/// Constant CSR matrix used for the (mostly bag-of-words) feature matrix.
/// Keeps its transpose so `S^T * G` is a row-parallel product too.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut offsets = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            offsets,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            offsets,
            indices,
            values,
        }
    }

    /// `self * dense`.
    pub fn matmul(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != dense.rows() {
            return Err(Error::dims(
                "sparse matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let n = dense.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        exec::for_each_chunk(out.as_mut_slice(), n.max(1), |r, orow| {
            for (c, v) in self.row(r) {
                for (o, &b) in orow.iter_mut().zip(dense.row(c)) {
                    *o += v * b;
                }
            }
        });
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }
}

/// A constant feature matrix together with its transpose.
#[derive(Debug, Clone)]
pub struct SparseFeatures {
    pub forward: CsrMatrix,
    pub transposed: CsrMatrix,
}

impl SparseFeatures {
    pub fn new(features: &DenseMatrix) -> Self {
        let forward = CsrMatrix::from_dense(features);
        let transposed = forward.transpose();
        Self {
            forward,
            transposed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_products_match_dense() {
        let d = DenseMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.5, 3.0],
        ])
        .unwrap();
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = CsrMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 5);
        assert_eq!(s.matmul(&w).unwrap(), d.matmul(&w).unwrap());
        let g = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, -1.0],
        ])
        .unwrap();
        assert_eq!(
            s.transpose().matmul(&g).unwrap(),
            d.t_matmul(&g).unwrap()
        );
        assert_eq!(s.transpose().transpose().to_dense(), d);
    }
}

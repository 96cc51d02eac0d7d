//! Coordinate-format sparse matrices for adjacency and propagation operators.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sparse matrix stored as (row, col, weight) triples, sorted row-major with
/// no duplicates and no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn from_entries(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        entries.retain(|&(_, _, w)| w != 0.0);
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::Parameter(format!(
                    "duplicate sparse entry at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::Parameter(format!(
                "sparse index ({r}, {c}) out of bounds for {rows}x{cols}"
            )));
        }
        Ok(SparseMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let entries = self.entries.iter().map(|&(r, c, w)| (c, r, w)).collect();
        SparseMatrix::from_entries(self.cols, self.rows, entries).expect("transpose is valid")
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose();
        if t.entries.len() != self.entries.len() {
            return false;
        }
        self.entries
            .iter()
            .zip(&t.entries)
            .all(|(a, b)| a.0 == b.0 && a.1 == b.1 && (a.2 - b.2).abs() <= tol)
    }

    /// Per-row sums, the degree vector when self is an adjacency matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows];
        for &(r, _, w) in &self.entries {
            d[r] += w;
        }
        d
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(vec![self.rows, self.cols]);
        for &(r, c, w) in &self.entries {
            out.data_mut()[r * self.cols + c] = w;
        }
        out
    }

    /// Sparse-dense product self * x for 2-d x.
    pub fn mul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[0] != self.cols {
            return Err(Error::ShapeMismatch {
                op: "sparse_dense_matmul",
                lhs: vec![self.rows, self.cols],
                rhs: x.shape().to_vec(),
            });
        }
        let n = x.shape()[1];
        let mut out = Tensor::zeros(vec![self.rows, n]);
        for &(r, c, w) in &self.entries {
            for j in 0..n {
                out.data_mut()[r * n + j] += w * x.data()[c * n + j];
            }
        }
        Ok(out)
    }

    /// Matrix-vector product for 1-d x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for &(r, c, w) in &self.entries {
            out[r] += w * x[c];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseMatrix::from_entries(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn drops_explicit_zeros() {
        let s = SparseMatrix::from_entries(2, 2, vec![(0, 0, 0.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(s.nnz(), 1);
    }

    #[test]
    fn identity_product() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let y = SparseMatrix::identity(2).mul_dense(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_product() {
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0]]);
        let y = SparseMatrix::zero(2, 2).mul_dense(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }
}

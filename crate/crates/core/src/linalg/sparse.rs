use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// A single sparse row: strictly increasing column indices and their values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds a row from unsorted `(column, value)` entries, summing duplicates
    /// and dropping explicit zeros.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out = SparseVector::default();
        for (col, val) in entries {
            match out.indices.last() {
                Some(&last) if last == col => *out.values.last_mut().unwrap() += val,
                _ => {
                    out.indices.push(col);
                    out.values.push(val);
                }
            }
        }
        let (indices, values) = out
            .indices
            .into_iter()
            .zip(out.values)
            .filter(|(_, v)| *v != 0.0)
            .unzip();
        SparseVector { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn add(&self, other: &SparseVector) -> SparseVector {
        SparseVector::from_entries(self.iter().chain(other.iter()).collect())
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SparseVector {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl SparseMatrix {
    pub fn from_rows(n_cols: usize, rows: &[SparseVector]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.indices.len() != row.values.len() {
                return Err(Error::Dimension(format!(
                    "row {r}: {} indices but {} values",
                    row.indices.len(),
                    row.values.len()
                )));
            }
            let mut prev: Option<usize> = None;
            for (c, v) in row.iter() {
                if c >= n_cols {
                    return Err(Error::Dimension(format!(
                        "row {r}: column {c} out of range for {n_cols} columns"
                    )));
                }
                if prev.is_some_and(|p| p >= c) {
                    return Err(Error::Dimension(format!(
                        "row {r}: column indices not strictly increasing"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("row {r}: non-finite value")));
                }
                prev = Some(c);
                indices.push(c);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let rows: Vec<SparseVector> = (0..m.rows())
            .map(|i| {
                SparseVector::from_entries(
                    m.row(i).iter().copied().enumerate().collect(),
                )
            })
            .collect();
        Self::from_rows(m.cols(), &rows).expect("dense rows are well formed")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self · rhs` where `rhs` is `n_cols × l`.
    pub fn mul_dense(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if rhs.rows() != self.n_cols {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, rhs.cols());
        for r in 0..self.n_rows {
            let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
            let dst = out.row_mut(r);
            for k in lo..hi {
                let v = self.values[k];
                for (d, &b) in dst.iter_mut().zip(rhs.row(self.indices[k])) {
                    *d += v * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` where `rhs` is `n_rows × l`.
    pub fn transpose_mul_dense(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if rhs.rows() != self.n_rows {
            return Err(Error::Dimension(format!(
                "sparse transpose {}x{} times dense {}x{}",
                self.n_cols,
                self.n_rows,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, rhs.cols());
        for r in 0..self.n_rows {
            let src = rhs.row(r);
            for (c, v) in self.row(r) {
                for (d, &b) in out.row_mut(c).iter_mut().zip(src) {
                    *d += v * b;
                }
            }
        }
        Ok(out)
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let picked: Vec<SparseVector> = rows
            .iter()
            .map(|&r| {
                let (indices, values) = self.row(r).unzip();
                SparseVector { indices, values }
            })
            .collect();
        SparseMatrix::from_rows(self.n_cols, &picked).expect("rows copied from a valid matrix")
    }
}

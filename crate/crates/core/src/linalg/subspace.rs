use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use super::sparse::{SparseMatrix, SparseVector};
use super::varimax::{varimax, VarimaxParams};
use crate::error::{Error, Result};

/// A learned projection from the sparse feature space onto `k` rotated axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    basis: DenseMatrix,
    singular_values: Vec<f64>,
    rotation: DenseMatrix,
    /// Reserved for centered variants; never populated by the fitting code.
    feature_means: Option<Vec<f64>>,
}

impl SubspaceModel {
    pub fn new(basis: DenseMatrix, singular_values: Vec<f64>) -> Result<Self> {
        let k = basis.cols();
        if singular_values.len() != k {
            return Err(Error::Dimension(format!(
                "{} singular values for {k} basis columns",
                singular_values.len()
            )));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Numeric("singular values not sorted".into()));
        }
        Ok(Self {
            basis,
            singular_values,
            rotation: DenseMatrix::identity(k),
            feature_means: None,
        })
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rotation(&self) -> &DenseMatrix {
        &self.rotation
    }

    pub fn feature_means(&self) -> Option<&[f64]> {
        self.feature_means.as_deref()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.rows()
    }

    /// Unrotated scores `X · V` (equal to `U · Σ` on the training rows).
    pub fn scores(&self, x: &SparseMatrix) -> Result<DenseMatrix> {
        x.mul_dense(&self.basis)
    }

    /// Fits a varimax rotation on the scores of `x` and stores it.
    /// Returns the rotated scores.
    pub fn fit_rotation(&mut self, x: &SparseMatrix, params: VarimaxParams) -> Result<DenseMatrix> {
        let scores = self.scores(x)?;
        let res = varimax(&scores, params)?;
        self.rotation = res.rotation;
        Ok(res.rotated)
    }

    /// `(x · basis) · rotation` for one sparse row.
    pub fn project(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let k = self.rank();
        let mut low = vec![0.0; k];
        for (c, v) in x.iter() {
            if c >= self.input_dim() {
                return Err(Error::Dimension(format!(
                    "feature index {c} outside a {}-dimensional space",
                    self.input_dim()
                )));
            }
            for (l, &b) in low.iter_mut().zip(self.basis.row(c)) {
                *l += v * b;
            }
        }
        self.rotation.vec_mul(&low)
    }

    pub fn project_rows(&self, x: &SparseMatrix) -> Result<DenseMatrix> {
        self.scores(x)?.matmul(&self.rotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd::{truncated_svd, SvdParams};

    fn fitted() -> (SparseMatrix, SubspaceModel) {
        let d = DenseMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0, 0.0, 0.0],
            vec![3.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 4.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 3.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0, 2.0],
        ])
        .unwrap();
        let x = SparseMatrix::from_dense(&d);
        let mut m = truncated_svd(&x, 2, SvdParams::default(), 3).unwrap();
        m.fit_rotation(&x, VarimaxParams::default()).unwrap();
        (x, m)
    }

    #[test]
    fn zero_vector_projects_to_zero() {
        let (_, m) = fitted();
        assert_eq!(m.project(&SparseVector::default()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_is_linear() {
        let (_, m) = fitted();
        let a = SparseVector::from_entries(vec![(0, 1.0), (3, 2.0)]);
        let b = SparseVector::from_entries(vec![(1, 0.5), (3, -1.0), (4, 3.0)]);
        let pa = m.project(&a).unwrap();
        let pb = m.project(&b).unwrap();
        let pab = m.project(&a.add(&b)).unwrap();
        for i in 0..2 {
            assert!((pa[i] + pb[i] - pab[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (_, m) = fitted();
        let bad = SparseVector::from_entries(vec![(9, 1.0)]);
        assert!(matches!(m.project(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn row_projection_agrees_with_single_projection() {
        let (x, m) = fitted();
        let all = m.project_rows(&x).unwrap();
        for r in 0..x.n_rows() {
            let (indices, values) = x.row(r).unzip();
            let p = m.project(&SparseVector { indices, values }).unwrap();
            for j in 0..2 {
                assert!((p[j] - all[(r, j)]).abs() < 1e-12);
            }
        }
        assert!(m.rotation().orthogonality_defect() < 1e-8);
    }
}

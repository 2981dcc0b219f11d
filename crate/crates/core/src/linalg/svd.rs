use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dense::DenseMatrix;
use super::sparse::SparseMatrix;
use super::subspace::SubspaceModel;
use crate::error::{Error, Result};

/// Parameters of the randomized range finder.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvdParams {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 2,
        }
    }
}

/// Thin SVD result: `a = u · diag(s) · vᵀ`, singular values non-increasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// Left singular vectors as columns, `m × r`.
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    /// Right singular vectors as columns, `n × r`.
    pub v: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One-sided (Hestenes) Jacobi SVD of a matrix given by its columns.
///
/// `columns` holds `n` columns of length `m`; requires `m ≥ n`.
pub fn jacobi_svd(columns: &[Vec<f64>]) -> ThinSvd {
    let n = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();

    const MAX_SWEEPS: usize = 60;
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = c * x - s * y;
                    a[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigmas: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]).then(i.cmp(&j)));

    let mut u_cols = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for &j in &order {
        let sigma = sigmas[j];
        let u = if sigma > 0.0 {
            a[j].iter().map(|x| x / sigma).collect()
        } else {
            vec![0.0; m]
        };
        u_cols.push(u);
        v_cols.push(v[j].clone());
        s.push(sigma);
    }
    ThinSvd {
        u: u_cols,
        s,
        v: v_cols,
    }
}

/// Orthonormalizes columns with two passes of modified Gram–Schmidt.
///
/// Columns that vanish (rank deficiency) are replaced by the first canonical
/// basis vector that is not yet spanned, so the output is always orthonormal.
pub fn orthonormalize(columns: &mut [Vec<f64>]) {
    let m = columns.first().map_or(0, Vec::len);
    for j in 0..columns.len() {
        let original = norm(&columns[j]);
        let (done, rest) = columns.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let proj = dot(q, col);
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= proj * qv;
                }
            }
        }
        let mut nrm = norm(col);
        if nrm <= 1e-12 * original.max(1.0) {
            for e in 0..m {
                col.iter_mut().for_each(|c| *c = 0.0);
                col[e] = 1.0;
                for _ in 0..2 {
                    for q in done.iter() {
                        let proj = dot(q, col);
                        for (c, qv) in col.iter_mut().zip(q) {
                            *c -= proj * qv;
                        }
                    }
                }
                nrm = norm(col);
                if nrm > 0.5 {
                    break;
                }
            }
        }
        col.iter_mut().for_each(|c| *c /= nrm);
    }
}

fn to_columns(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

fn from_columns(cols: &[Vec<f64>]) -> DenseMatrix {
    let rows = cols.first().map_or(0, Vec::len);
    let mut m = DenseMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

fn orth(m: &DenseMatrix) -> DenseMatrix {
    let mut cols = to_columns(m);
    orthonormalize(&mut cols);
    from_columns(&cols)
}

/// Flips each column so that its largest-magnitude entry is positive.
/// Returns the applied signs.
pub(crate) fn normalize_column_signs(cols: &mut [Vec<f64>]) -> Vec<f64> {
    cols.iter_mut()
        .map(|c| {
            let mut best = 0.0f64;
            for &x in c.iter() {
                if x.abs() > best.abs() {
                    best = x;
                }
            }
            if best < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Randomized rank-`k` truncated SVD of a sparse matrix.
///
/// Gaussian sketch of width `k + oversample`, `power_iters` rounds of
/// subspace iteration with re-orthonormalization, then an exact SVD of the
/// small projected matrix. The returned model carries the top `k` right
/// singular vectors and an identity rotation.
pub fn truncated_svd(
    x: &SparseMatrix,
    k: usize,
    params: SvdParams,
    seed: u64,
) -> Result<SubspaceModel> {
    let min_dim = x.n_rows().min(x.n_cols());
    if k == 0 || k > min_dim {
        return Err(Error::Dimension(format!(
            "rank {k} invalid for a {}x{} matrix",
            x.n_rows(),
            x.n_cols()
        )));
    }
    if x.frobenius_norm() == 0.0 {
        return Err(Error::Degenerate("all-zero matrix".into()));
    }

    let width = (k + params.oversample).min(min_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = DenseMatrix::zeros(x.n_cols(), width);
    for i in 0..x.n_cols() {
        for v in omega.row_mut(i) {
            *v = StandardNormal.sample(&mut rng);
        }
    }

    let mut q = orth(&x.mul_dense(&omega)?);
    for _ in 0..params.power_iters {
        let z = orth(&x.transpose_mul_dense(&q)?);
        q = orth(&x.mul_dense(&z)?);
    }

    // B = Qᵀ X, so Bᵀ = Xᵀ Q is n_cols × width with n_cols ≥ width.
    let bt = x.transpose_mul_dense(&q)?;
    let svd = jacobi_svd(&to_columns(&bt));
    let mut right: Vec<Vec<f64>> = svd.u.into_iter().take(k).collect();
    normalize_column_signs(&mut right);
    let singular_values: Vec<f64> = svd.s.into_iter().take(k).collect();

    SubspaceModel::new(from_columns(&right), singular_values)
}

/// ‖X − X·V·Vᵀ‖_F for the model's (unrotated) basis `V`.
pub fn reconstruction_error(x: &SparseMatrix, model: &SubspaceModel) -> Result<f64> {
    let scores = x.mul_dense(model.basis())?;
    let mut err = 0.0;
    let basis_t = model.basis().transpose();
    for r in 0..x.n_rows() {
        let mut approx = basis_t.vec_mul(scores.row(r))?;
        for (c, v) in x.row(r) {
            approx[c] -= v;
        }
        err += approx.iter().map(|a| a * a).sum::<f64>();
    }
    Ok(err.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::SparseVector;

    fn sparse(rows: &[Vec<f64>]) -> SparseMatrix {
        SparseMatrix::from_dense(&DenseMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn jacobi_recovers_diagonal() {
        let cols = vec![vec![1.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]];
        let svd = jacobi_svd(&cols);
        assert_eq!(svd.s, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rank_one_outer_product_is_exact() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 0.0, 1.0, -1.0, 4.0];
        let rows: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
        let x = sparse(&rows);
        let model = truncated_svd(&x, 1, SvdParams::default(), 7).unwrap();
        let expected = norm(&u) * norm(&v);
        assert!((model.singular_values()[0] - expected).abs() < 1e-10);
        assert!(reconstruction_error(&x, &model).unwrap() < 1e-10);
    }

    #[test]
    fn diagonal_top_two() {
        let x = sparse(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let model = truncated_svd(&x, 2, SvdParams::default(), 1).unwrap();
        let s = model.singular_values();
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 2.0).abs() < 1e-12);
        assert!(model.basis().orthogonality_defect() < 1e-8);
    }

    #[test]
    fn dimension_and_degenerate_errors() {
        let x = sparse(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            truncated_svd(&x, 0, SvdParams::default(), 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            truncated_svd(&x, 3, SvdParams::default(), 0),
            Err(Error::Dimension(_))
        ));
        let z = SparseMatrix::from_rows(2, &[SparseVector::default(), SparseVector::default()])
            .unwrap();
        assert!(matches!(
            truncated_svd(&z, 1, SvdParams::default(), 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let x = sparse(&[
            vec![1.0, 2.0, 0.0, 1.0],
            vec![0.0, 1.0, 3.0, 0.0],
            vec![4.0, 0.0, 0.0, 1.0],
        ]);
        let a = truncated_svd(&x, 2, SvdParams::default(), 42).unwrap();
        let b = truncated_svd(&x, 2, SvdParams::default(), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orthonormalize_handles_rank_deficiency() {
        let mut cols = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 0.0]];
        orthonormalize(&mut cols);
        let m = from_columns(&cols);
        assert!(m.orthogonality_defect() < 1e-12);
    }
}

use super::dense::DenseMatrix;
use super::svd::normalize_column_signs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VarimaxParams {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for VarimaxParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    /// Orthogonal `k × k` rotation.
    pub rotation: DenseMatrix,
    /// `loadings · rotation`, sign-normalized per column.
    pub rotated: DenseMatrix,
    /// Criterion value before the first sweep and after every sweep.
    pub criterion_trace: Vec<f64>,
}

fn column_criterion(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let (mut s2, mut s4) = (0.0, 0.0);
    for &x in col {
        let sq = x * x;
        s2 += sq;
        s4 += sq * sq;
    }
    s4 / n - (s2 / n) * (s2 / n)
}

/// Raw varimax criterion: sum over columns of the variance of squared loadings.
pub fn varimax_criterion(loadings: &DenseMatrix) -> f64 {
    (0..loadings.cols())
        .map(|j| column_criterion(&loadings.column(j)))
        .sum()
}

fn columns_criterion(cols: &[Vec<f64>]) -> f64 {
    cols.iter().map(|c| column_criterion(c)).sum()
}

/// Optimal planar angle for the column pair `(x, y)` under raw varimax.
fn planar_angle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi * xi - yi * yi;
        let v = 2.0 * xi * yi;
        a += u;
        b += v;
        c += u * u - v * v;
        d += 2.0 * u * v;
    }
    let num = d - 2.0 * a * b / n;
    let den = c - (a * a - b * b) / n;
    if num == 0.0 && den >= 0.0 {
        return 0.0;
    }
    num.atan2(den) / 4.0
}

/// Raw (unnormalized) varimax rotation by cyclic pairwise planar rotations.
///
/// Each planar step maximizes the criterion within its plane, so the
/// criterion never decreases from sweep to sweep. Iteration stops when the
/// relative change of the criterion over a sweep drops below `tol` or after
/// `max_iters` sweeps.
pub fn varimax(loadings: &DenseMatrix, params: VarimaxParams) -> Result<VarimaxResult> {
    let k = loadings.cols();
    if k == 0 {
        return Err(Error::Dimension("varimax needs at least one column".into()));
    }
    if !loadings.is_finite() {
        return Err(Error::Numeric("non-finite loadings".into()));
    }
    let initial = varimax_criterion(loadings);
    if k == 1 {
        return Ok(VarimaxResult {
            rotation: DenseMatrix::identity(1),
            rotated: loadings.clone(),
            criterion_trace: vec![initial],
        });
    }

    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| loadings.column(j)).collect();
    // Rotation kept as columns as well: rotated column j = loadings · rot[j].
    let mut rot: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut trace = vec![initial];
    let mut current = initial;
    for _ in 0..params.max_iters {
        for p in 0..k {
            for q in (p + 1)..k {
                let theta = planar_angle(&cols[p], &cols[q]);
                if theta == 0.0 {
                    continue;
                }
                let (s, c) = theta.sin_cos();
                let (left, right) = cols.split_at_mut(q);
                rotate_pair(&mut left[p], &mut right[0], c, s);
                let (left, right) = rot.split_at_mut(q);
                rotate_pair(&mut left[p], &mut right[0], c, s);
            }
        }
        let next = columns_criterion(&cols);
        trace.push(next);
        let change = (next - current).abs();
        current = next;
        if change <= params.tol * current.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let signs = normalize_column_signs(&mut cols);
    for (r, s) in rot.iter_mut().zip(&signs) {
        if *s < 0.0 {
            r.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let mut rotation = DenseMatrix::zeros(k, k);
    for (j, r) in rot.iter().enumerate() {
        rotation.set_column(j, r);
    }
    let mut rotated = DenseMatrix::zeros(loadings.rows(), k);
    for (j, c) in cols.iter().enumerate() {
        rotated.set_column(j, c);
    }
    Ok(VarimaxResult {
        rotation,
        rotated,
        criterion_trace: trace,
    })
}

#[inline]
fn rotate_pair(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = a * c + b * s;
        *yi = -a * s + b * c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DenseMatrix {
        let data = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::from_row_major(n, k, data).unwrap()
    }

    #[test]
    fn single_column_is_identity() {
        let l = DenseMatrix::from_rows(&[vec![1.0], vec![-2.0]]).unwrap();
        let r = varimax(&l, VarimaxParams::default()).unwrap();
        assert_eq!(r.rotation, DenseMatrix::identity(1));
        assert_eq!(r.rotated, l);
    }

    #[test]
    fn rejects_non_finite() {
        let l = DenseMatrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(matches!(
            varimax(&l, VarimaxParams::default()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn recovers_simple_structure_rotated_by_45_degrees() {
        let simple = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 1.5],
            vec![0.0, 0.5],
        ])
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = DenseMatrix::from_rows(&[vec![h, -h], vec![h, h]]).unwrap();
        let mixed = simple.matmul(&q).unwrap();
        let res = varimax(&mixed, VarimaxParams::default()).unwrap();
        assert!(varimax_criterion(&res.rotated) > varimax_criterion(&mixed) + 1e-3);
        // Each row should load on exactly one axis again.
        for i in 0..4 {
            let row = res.rotated.row(i);
            let small = row[0].abs().min(row[1].abs());
            assert!(small < 1e-6, "row {i}: {row:?}");
        }
        // Same absolute structure as the original, up to column permutation.
        let direct = (res.rotated[(0, 0)].abs() - 1.0).abs() < 1e-6;
        for i in 0..4 {
            let (a, b) = if direct { (0, 1) } else { (1, 0) };
            assert!((res.rotated[(i, a)].abs() - simple[(i, 0)]).abs() < 1e-6);
            assert!((res.rotated[(i, b)].abs() - simple[(i, 1)]).abs() < 1e-6);
        }
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let simple = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let res = varimax(&simple, VarimaxParams::default()).unwrap();
        let before = varimax_criterion(&simple);
        let after = varimax_criterion(&res.rotated);
        assert!((before - after).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let v = res.rotation[(i, j)].abs();
                assert!(v < 1e-12 || (v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_inputs_rotate_orthogonally_and_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(5..40);
            let k = rng.random_range(2..6);
            let l = random_matrix(&mut rng, n, k);
            let res = varimax(&l, VarimaxParams::default()).unwrap();
            assert!(res.rotation.orthogonality_defect() < 1e-8);
            for w in res.criterion_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
            let recomputed = l.matmul(&res.rotation).unwrap();
            for (a, b) in recomputed.as_slice().iter().zip(res.rotated.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

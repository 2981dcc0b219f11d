use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    /// The differences have zero variance (for instance two identical systems).
    pub degenerate: bool,
}

/// Two-tailed tail probability `P(|T| >= |t|)` for `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Paired two-tailed t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Input("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(TTest {
            n,
            mean_diff: mean,
            t: 0.0,
            p: 1.0,
            significant: false,
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let p = student_t_two_tailed(t, (n - 1) as f64);
    Ok(TTest {
        n,
        mean_diff: mean,
        t,
        p,
        significant: p < SIGNIFICANCE_LEVEL,
        degenerate: false,
    })
}

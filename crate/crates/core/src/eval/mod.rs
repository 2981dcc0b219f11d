//! Offline ranking metrics over clicked positions and the paired t-test.

mod report;
mod ttest;

pub use report::{manifest_line, relative_delta, MetricsReport, DEFAULT_SUCCESS_KS};
pub use ttest::{paired_t_test, student_t_two_tailed, TTest, SIGNIFICANCE_LEVEL};

use crate::error::{Error, Result};

/// Rank of the clicked candidate, with ties resolved by expected rank:
/// `higher + (tied + 1) / 2`, where `tied` counts the clicked one itself.
pub fn rank_of_clicked(scores: &[f64], clicked: usize) -> Result<f64> {
    if clicked >= scores.len() {
        return Err(Error::Input(format!(
            "clicked index {clicked} out of range for {} scores",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Input(format!("score {i} is not finite")));
    }
    let target = scores[clicked];
    let higher = scores.iter().filter(|&&s| s > target).count();
    let tied = scores.iter().filter(|&&s| s == target).count();
    Ok(higher as f64 + (tied as f64 + 1.0) / 2.0)
}

fn check_ranks(ranks: &[f64]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Input("no ranks to aggregate".into()));
    }
    if let Some(r) = ranks.iter().find(|r| !(**r >= 1.0)) {
        return Err(Error::Input(format!("rank {r} is below 1")));
    }
    Ok(())
}

fn check_weights(ranks: &[f64], weights: &[f64]) -> Result<()> {
    check_ranks(ranks)?;
    if ranks.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} ranks but {} weights",
            ranks.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Input(format!("weight {w} is not positive")));
    }
    Ok(())
}

pub fn mrr(ranks: &[f64]) -> Result<f64> {
    check_ranks(ranks)?;
    Ok(ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of queries whose clicked document sits within the top `k`.
pub fn success_at_k(ranks: &[f64], k: usize) -> Result<f64> {
    check_ranks(ranks)?;
    if k == 0 {
        return Err(Error::Input("success@k needs k >= 1".into()));
    }
    let hits = ranks.iter().filter(|&&r| r <= k as f64).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Weighted mean of reciprocal ranks. With unit weights this is exactly `mrr`.
pub fn wmrr(ranks: &[f64], weights: &[f64]) -> Result<f64> {
    check_weights(ranks, weights)?;
    let total: f64 = weights.iter().sum();
    let acc: f64 = ranks.iter().zip(weights).map(|(r, w)| w * (1.0 / r)).sum();
    Ok(acc / total)
}

/// Weighted average click position; lower is better.
pub fn wacp(ranks: &[f64], weights: &[f64]) -> Result<f64> {
    check_weights(ranks, weights)?;
    let total: f64 = weights.iter().sum();
    Ok(ranks.iter().zip(weights).map(|(r, w)| w * r).sum::<f64>() / total)
}

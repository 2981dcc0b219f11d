use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of `P(a > b) = p` against the label `y`.
pub fn loss_rank(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// `d loss_rank / d p` for an unclamped `p`.
pub fn loss_rank_grad(p: f64, y: f64) -> f64 {
    (p - y) / (p * (1.0 - p))
}

/// Cross-entropy `-Σ p_c log p_hat`.
pub fn loss_cluster(p_hat: &[f64], p_c: &[f64]) -> Result<f64> {
    if p_hat.len() != p_c.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} clusters but target has {}",
            p_hat.len(),
            p_c.len()
        )));
    }
    Ok(p_hat
        .iter()
        .zip(p_c)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&q, &t)| -t * clamp(q).ln())
        .sum())
}

/// Same loss for a sparse target given as `(cluster id, mass)`.
pub(crate) fn loss_cluster_sparse(p_hat: &[f64], target: &[(u32, f64)]) -> f64 {
    target.iter().map(|&(c, t)| -t * clamp(p_hat[c as usize]).ln()).sum()
}

fn check_lengths(l_rank: &[f64], l_cluster: &[f64]) -> Result<()> {
    if l_rank.len() != l_cluster.len() {
        return Err(Error::Dimension(format!(
            "{} rank losses but {} cluster losses",
            l_rank.len(),
            l_cluster.len()
        )));
    }
    if l_rank.is_empty() {
        return Err(Error::Input("no losses to combine".into()));
    }
    Ok(())
}

/// Mean over queries of `l_rank + λ l_cluster`.
pub fn loss_joint(l_rank: &[f64], l_cluster: &[f64], lambda: f64) -> Result<f64> {
    check_lengths(l_rank, l_cluster)?;
    let total: f64 = l_rank.iter().zip(l_cluster).map(|(r, c)| r + lambda * c).sum();
    Ok(total / l_rank.len() as f64)
}

/// The same objective written as mean rank loss plus λ times mean cluster
/// loss, which reads as the cluster task regularizing the ranker.
pub fn loss_joint_regularized(l_rank: &[f64], l_cluster: &[f64], lambda: f64) -> Result<f64> {
    check_lengths(l_rank, l_cluster)?;
    let n = l_rank.len() as f64;
    Ok(l_rank.iter().sum::<f64>() / n + lambda * (l_cluster.iter().sum::<f64>() / n))
}

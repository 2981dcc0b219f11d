use super::model::{ForwardCache, PairExample, RankModel};
use crate::error::Result;

/// Agreement of one parameter group's analytic gradient with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: String,
    pub analytic_norm: f64,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`, or the raw
    /// difference norm when both are below 1e-8.
    pub relative_error: f64,
}

/// Compares `backward` against central differences of
/// `loss_rank + λ loss_cluster` for every parameter, dropout off.
pub fn check_gradients(model: &RankModel, pair: &PairExample, lambda: f64, h: f64) -> Result<Vec<GroupCheck>> {
    let with_cluster = lambda != 0.0 && model.has_cluster_head() && !pair.query.cluster_target.is_empty();
    let mut cache = ForwardCache::default();
    model.forward(pair, with_cluster, None, &mut cache)?;
    let mut analytic = model.params.zeros_like();
    model.backward(pair, &cache, lambda, 1.0, &mut analytic)?;

    let objective = |m: &RankModel| -> Result<f64> {
        let (r, c) = m.pair_losses(pair)?;
        Ok(r + lambda * c)
    };
    let mut probe = model.clone();
    let mut numeric = model.params.zeros_like();
    let sizes: Vec<usize> = model.params.groups().iter().map(|(_, g)| g.len()).collect();
    for (gi, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let original = model.params.groups()[gi].1[k];
            probe.params.groups_mut()[gi].1[k] = original + h;
            let up = objective(&probe)?;
            probe.params.groups_mut()[gi].1[k] = original - h;
            let down = objective(&probe)?;
            probe.params.groups_mut()[gi].1[k] = original;
            numeric.groups_mut()[gi].1[k] = (up - down) / (2.0 * h);
        }
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(analytic
        .groups()
        .into_iter()
        .zip(numeric.groups())
        .map(|((name, a), (_, n))| {
            let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
            let scale = norm(a).max(norm(n));
            GroupCheck {
                group: name,
                analytic_norm: norm(a),
                relative_error: if scale < 1e-8 { norm(&diff) } else { norm(&diff) / scale },
            }
        })
        .collect())
}

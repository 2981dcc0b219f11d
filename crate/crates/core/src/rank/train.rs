use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::EncodedQuery;
use super::loss::{loss_cluster_sparse, loss_rank};
use super::model::{ForwardCache, PairExample, RankModel};
use super::optim::Optimizer;
use super::score::score_documents;
use crate::corpus::pairs_for_click;
use crate::error::{Error, Result};
use crate::eval::{mrr, rank_of_clicked};

const PAIR_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Propensity-weighted mean of `loss_rank + λ loss_cluster` over the epoch's pairs.
    pub train_loss: f64,
    pub train_rank_loss: f64,
    pub train_cluster_loss: f64,
    pub dev_mrr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_dev_mrr: Option<f64>,
}

/// Fractional rank of the clicked candidate for every query.
pub fn clicked_ranks(model: &RankModel, queries: &[EncodedQuery]) -> Result<Vec<f64>> {
    queries
        .iter()
        .map(|q| rank_of_clicked(&score_documents(model, q)?, q.clicked))
        .collect()
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy)]
struct PairRef {
    query: usize,
    doc_a: usize,
    doc_b: usize,
    label: f64,
}

fn make_pairs(queries: &[EncodedQuery], seed: u64) -> Result<Vec<PairRef>> {
    let mut rng = seeded(seed, PAIR_STREAM);
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        if q.docs.len() < 2 {
            return Err(Error::Data(format!("query {} has fewer than 2 candidates", q.query_id)));
        }
        for p in pairs_for_click(&q.query_id, q.docs.len(), q.clicked, q.weight, &mut rng)? {
            out.push(PairRef {
                query: qi,
                doc_a: p.doc_a,
                doc_b: p.doc_b,
                label: p.label,
            });
        }
    }
    Ok(out)
}

/// Mini-batch training with early stopping on dev MRR. Returns the model with
/// the best dev parameters (the last ones when `dev` is empty).
pub fn train_model(mut model: RankModel, train: &[EncodedQuery], dev: &[EncodedQuery]) -> Result<(RankModel, TrainingLog)> {
    if train.is_empty() {
        return Err(Error::Data("empty training split".into()));
    }
    let config = model.config.clone();
    config.validate()?;
    let lambda = if model.has_cluster_head() { config.mix_rate } else { 0.0 };
    let mut pairs = make_pairs(train, config.seed)?;
    let mut shuffle_rng = seeded(config.seed, SHUFFLE_STREAM);
    let mut dropout_rng = seeded(config.seed, DROPOUT_STREAM);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.params);
    let mut grads = model.params.zeros_like();
    let mut cache = ForwardCache::default();
    let mut log = TrainingLog::default();
    let mut best = model.params.clone();
    let mut best_mrr = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        pairs.shuffle(&mut shuffle_rng);
        let (mut sum_w, mut sum_rank, mut sum_cluster) = (0.0, 0.0, 0.0);
        for batch in pairs.chunks(config.batch_size) {
            grads.fill(0.0);
            let norm = 1.0 / batch.len() as f64;
            for p in batch {
                let q = &train[p.query];
                let pair = PairExample {
                    query: q,
                    doc_a: p.doc_a,
                    doc_b: p.doc_b,
                    label: p.label,
                    weight: q.weight,
                };
                let with_cluster = lambda != 0.0 && !q.cluster_target.is_empty();
                model.forward(&pair, with_cluster, Some(&mut dropout_rng), &mut cache)?;
                sum_w += q.weight;
                sum_rank += q.weight * loss_rank(cache.prob, p.label);
                if with_cluster {
                    sum_cluster += q.weight * loss_cluster_sparse(&cache.cluster_probs, &q.cluster_target);
                }
                model.backward(&pair, &cache, lambda, q.weight * norm, &mut grads)?;
            }
            if config.wide_l2 > 0.0 {
                for (g, w) in grads.wide.iter_mut().zip(&model.params.wide) {
                    *g += config.wide_l2 * w;
                }
            }
            optimizer.step(&mut model.params, &grads);
        }
        if !model.params.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let (rank_loss, cluster_loss) = (sum_rank / sum_w, sum_cluster / sum_w);
        let dev_mrr = if dev.is_empty() {
            None
        } else {
            Some(mrr(&clicked_ranks(&model, dev)?)?)
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: rank_loss + lambda * cluster_loss,
            train_rank_loss: rank_loss,
            train_cluster_loss: cluster_loss,
            dev_mrr,
        });
        match dev_mrr {
            Some(m) if m > best_mrr => {
                best_mrr = m;
                best.clone_from(&model.params);
                log.best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            None => log.best_epoch = epoch,
        }
    }
    if !dev.is_empty() {
        model.params = best;
        log.best_dev_mrr = Some(best_mrr);
    }
    Ok((model, log))
}

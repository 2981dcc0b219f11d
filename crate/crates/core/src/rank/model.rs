use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::encode::{EncodedQuery, EncodedRecord, Layout};
use super::loss::{loss_cluster_sparse, loss_rank};
use super::params::ModelParameters;
use crate::error::{Error, Result};

/// Ordered pair of candidates of one query; `label` is 1 when `doc_a` was clicked.
#[derive(Debug, Clone, Copy)]
pub struct PairExample<'a> {
    pub query: &'a EncodedQuery,
    pub doc_a: usize,
    pub doc_b: usize,
    pub label: f64,
    pub weight: f64,
}

/// Activations kept for the backward pass. Reused across pairs.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Pre-activation of each hidden layer.
    pub pre: Vec<Vec<f64>>,
    /// Output of each hidden layer after ReLU and dropout.
    pub act: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers; empty when dropout is off.
    pub masks: Vec<Vec<f64>>,
    pub logit: f64,
    pub prob: f64,
    pub cluster_pre: Vec<f64>,
    pub cluster_act: Vec<f64>,
    pub cluster_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: ModelParameters,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(logits.iter().map(|l| (l - max).exp()));
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation in layer {layer}")))
    }
}

impl RankModel {
    pub fn new(config: ModelConfig, layout: Layout) -> Result<Self> {
        config.validate()?;
        if config.variant == Variant::QcMtlrm && layout.num_clusters == 0 {
            return Err(Error::Config("QC-MTLRM needs a nonempty cluster vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParameters::init(&layout, &config, &mut rng);
        Ok(Self { config, layout, params })
    }

    /// Count-weighted embedding sum per slot followed by the dense values.
    pub fn embed_into(&self, record: &EncodedRecord, slots: &[usize], out: &mut [f64]) {
        let e = self.layout.embedding_dim;
        out.fill(0.0);
        for (s, (&table, tokens)) in slots.iter().zip(&record.sparse).enumerate() {
            let dst = &mut out[s * e..(s + 1) * e];
            let rows = &self.params.embeddings[table];
            for &(id, count) in tokens {
                let row = &rows[id as usize * e..(id as usize + 1) * e];
                for (d, r) in dst.iter_mut().zip(row) {
                    *d += count * r;
                }
            }
        }
        out[slots.len() * e..].copy_from_slice(&record.dense);
    }

    pub fn embed_query(&self, record: &EncodedRecord) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.query_width()];
        self.embed_into(record, &self.layout.query_slots, &mut out);
        out
    }

    pub fn embed_doc(&self, record: &EncodedRecord) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.doc_width()];
        self.embed_into(record, &self.layout.doc_slots, &mut out);
        out
    }

    fn build_input(&self, pair: &PairExample, out: &mut Vec<f64>) {
        let (qw, dw) = (self.layout.query_width(), self.layout.doc_width());
        out.resize(qw + 2 * dw, 0.0);
        let q = pair.query;
        self.embed_into(&q.query, &self.layout.query_slots, &mut out[..qw]);
        self.embed_into(&q.docs[pair.doc_a], &self.layout.doc_slots, &mut out[qw..qw + dw]);
        self.embed_into(&q.docs[pair.doc_b], &self.layout.doc_slots, &mut out[qw + dw..]);
    }

    pub(crate) fn wide_term(&self, query: &EncodedQuery) -> f64 {
        query.wide.iter().map(|&i| self.params.wide[i as usize]).sum()
    }

    pub fn has_cluster_head(&self) -> bool {
        self.params.cluster_hidden.is_some()
    }

    /// Full forward pass into `cache`. Dropout is applied when `dropout` holds
    /// an rng and the configured rate is positive; the cluster head runs only
    /// when `with_cluster` is set.
    pub fn forward(
        &self,
        pair: &PairExample,
        with_cluster: bool,
        dropout: Option<&mut ChaCha8Rng>,
        cache: &mut ForwardCache,
    ) -> Result<()> {
        self.build_input(pair, &mut cache.input);
        check_finite(&cache.input, 0)?;
        let n_hidden = self.params.hidden.len();
        cache.pre.resize_with(n_hidden, Vec::new);
        cache.act.resize_with(n_hidden, Vec::new);
        let rate = self.config.dropout_rate;
        let mut rng = dropout.filter(|_| rate > 0.0);
        cache.masks.resize_with(if rng.is_some() { n_hidden } else { 0 }, Vec::new);
        let keep = 1.0 / (1.0 - rate);
        for (l, layer) in self.params.hidden.iter().enumerate() {
            let (prev, rest) = cache.act.split_at_mut(l);
            let x = if l == 0 { &cache.input } else { &prev[l - 1] };
            layer.forward(x, &mut cache.pre[l]);
            check_finite(&cache.pre[l], l + 1)?;
            let act = &mut rest[0];
            act.clear();
            act.extend(cache.pre[l].iter().map(|&v| v.max(0.0)));
            if let Some(rng) = rng.as_deref_mut() {
                let mask = &mut cache.masks[l];
                mask.clear();
                mask.extend((0..act.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }));
                for (a, m) in act.iter_mut().zip(mask.iter()) {
                    *a *= m;
                }
            }
        }
        let top = &cache.act[n_hidden - 1];
        let mut z = Vec::with_capacity(1);
        self.params.output.forward(top, &mut z);
        cache.logit = z[0] + self.wide_term(pair.query);
        check_finite(&[cache.logit], n_hidden + 1)?;
        cache.prob = sigmoid(cache.logit);
        if with_cluster {
            let (Some(hid), Some(out)) = (&self.params.cluster_hidden, &self.params.cluster_output) else {
                return Err(Error::Config(format!("{} has no cluster head", self.config.variant)));
            };
            if out.outputs == 0 {
                return Err(Error::Config("empty cluster vocabulary".into()));
            }
            hid.forward(top, &mut cache.cluster_pre);
            cache.cluster_act.clear();
            cache.cluster_act.extend(cache.cluster_pre.iter().map(|&v| v.max(0.0)));
            let mut logits = Vec::new();
            out.forward(&cache.cluster_act, &mut logits);
            check_finite(&logits, n_hidden + 2)?;
            softmax_into(&logits, &mut cache.cluster_probs);
        }
        Ok(())
    }

    /// `P(doc_a > doc_b)` with dropout off.
    pub fn forward_rank(&self, pair: &PairExample) -> Result<f64> {
        let mut cache = ForwardCache::default();
        self.forward(pair, false, None, &mut cache)?;
        Ok(cache.prob)
    }

    /// Cluster distribution predicted from the shared layers.
    pub fn forward_cluster(&self, pair: &PairExample) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward(pair, true, None, &mut cache)?;
        Ok(cache.cluster_probs)
    }

    /// Rank loss and cluster loss of one pair with dropout off.
    pub fn pair_losses(&self, pair: &PairExample) -> Result<(f64, f64)> {
        let mut cache = ForwardCache::default();
        let with_cluster = self.has_cluster_head() && !pair.query.cluster_target.is_empty();
        self.forward(pair, with_cluster, None, &mut cache)?;
        let lc = if with_cluster {
            loss_cluster_sparse(&cache.cluster_probs, &pair.query.cluster_target)
        } else {
            0.0
        };
        Ok((loss_rank(cache.prob, pair.label), lc))
    }

    /// Adds `scale` times the gradient of `loss_rank + λ loss_cluster` to
    /// `grads`. Needs the cache of a forward pass on the same pair; the cluster
    /// head is skipped entirely when `lambda == 0`.
    pub fn backward(
        &self,
        pair: &PairExample,
        cache: &ForwardCache,
        lambda: f64,
        scale: f64,
        grads: &mut ModelParameters,
    ) -> Result<()> {
        let p = &self.params;
        let n_hidden = p.hidden.len();
        let top = &cache.act[n_hidden - 1];
        let dz = scale * (cache.prob - pair.label);
        if !dz.is_finite() {
            return Err(Error::Numeric("non-finite gradient at the output".into()));
        }
        grads.output.accumulate(top, &[dz]);
        for &i in &pair.query.wide {
            grads.wide[i as usize] += dz;
        }
        let mut dh: Vec<f64> = p.output.weight.iter().map(|w| w * dz).collect();

        let target = &pair.query.cluster_target;
        if lambda != 0.0 && !target.is_empty() {
            let (Some(hid), Some(out)) = (&p.cluster_hidden, &p.cluster_output) else {
                return Err(Error::Config(format!("{} has no cluster head", self.config.variant)));
            };
            if cache.cluster_probs.len() != out.outputs {
                return Err(Error::Config("backward needs a forward pass with the cluster head".into()));
            }
            let mut dlogits: Vec<f64> = cache.cluster_probs.iter().map(|q| scale * lambda * q).collect();
            for &(c, t) in target {
                dlogits[c as usize] -= scale * lambda * t;
            }
            grads.cluster_output.as_mut().expect("same shape").accumulate(&cache.cluster_act, &dlogits);
            let mut dg = Vec::new();
            out.back(&dlogits, &mut dg);
            for (d, pre) in dg.iter_mut().zip(&cache.cluster_pre) {
                if *pre <= 0.0 {
                    *d = 0.0;
                }
            }
            grads.cluster_hidden.as_mut().expect("same shape").accumulate(top, &dg);
            let mut extra = Vec::new();
            hid.back(&dg, &mut extra);
            for (a, b) in dh.iter_mut().zip(&extra) {
                *a += b;
            }
        }

        let mut delta = Vec::new();
        for l in (0..n_hidden).rev() {
            delta.clear();
            delta.extend(dh.iter().zip(&cache.pre[l]).map(|(&g, &pre)| if pre > 0.0 { g } else { 0.0 }));
            if let Some(mask) = cache.masks.get(l) {
                for (d, m) in delta.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            if delta.iter().any(|d| !d.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in layer {}", l + 1)));
            }
            let x = if l == 0 { &cache.input } else { &cache.act[l - 1] };
            grads.hidden[l].accumulate(x, &delta);
            p.hidden[l].back(&delta, &mut dh);
        }

        let (qw, dw) = (self.layout.query_width(), self.layout.doc_width());
        let q = pair.query;
        self.scatter(&q.query, &self.layout.query_slots, &dh[..qw], grads);
        self.scatter(&q.docs[pair.doc_a], &self.layout.doc_slots, &dh[qw..qw + dw], grads);
        self.scatter(&q.docs[pair.doc_b], &self.layout.doc_slots, &dh[qw + dw..], grads);
        Ok(())
    }

    fn scatter(&self, record: &EncodedRecord, slots: &[usize], dx: &[f64], grads: &mut ModelParameters) {
        let e = self.layout.embedding_dim;
        for (s, (&table, tokens)) in slots.iter().zip(&record.sparse).enumerate() {
            let src = &dx[s * e..(s + 1) * e];
            let rows = &mut grads.embeddings[table];
            for &(id, count) in tokens {
                let row = &mut rows[id as usize * e..(id as usize + 1) * e];
                for (g, d) in row.iter_mut().zip(src) {
                    *g += count * d;
                }
            }
        }
    }
}

//! Synthetic click logs with planted query clusters.
//!
//! Every query belongs to one planted cluster. Its n-gram tokens come mostly
//! from that cluster's vocabulary, and the clicked candidate follows the
//! cluster's click rule: recency clusters click the freshest candidate,
//! content clusters click the candidate sharing the most n-grams with the
//! query. With probability `noise_rate` the click is redrawn uniformly.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DocumentRecord, QueryRecord, Schema, SparseFields, SplitTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClickRule {
    RecencyPreferring,
    ContentMatchPreferring,
}

/// Field layout of generated datasets.
pub const SYNTH_SCHEMA: (&[&str], &[&str], &[&str], &[&str]) = (
    &["ngram", "category", "language"],
    &["hour"],
    &["ngram", "category", "structure"],
    &["recency", "text_match"],
);

const LANGUAGES: [&str; 4] = ["en", "de", "fr", "ja"];
const NUM_CATEGORIES: usize = 5;
const TEMPLATES_PER_CLUSTER: usize = 5;
const BASE_TIMESTAMP: i64 = 1_700_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub train_queries: usize,
    pub dev_queries: usize,
    pub test_queries: usize,
    pub num_clusters: usize,
    /// Vocabulary size of each planted cluster.
    pub vocab_size: usize,
    /// One rule per cluster; empty alternates recency / content-match.
    pub click_rules: Vec<ClickRule>,
    pub noise_rate: f64,
    /// Probability that an n-gram draw comes from the pool shared by all clusters.
    pub shared_token_fraction: f64,
    pub num_candidates: usize,
    pub query_tokens: usize,
    pub doc_tokens: usize,
    /// Probability that a non-copied document token is on the query's topic.
    pub doc_topic_fraction: f64,
    /// Upper bound of the per-document probability of copying a query n-gram.
    pub max_copy_rate: f64,
    /// Zipf exponent of token popularity inside a vocabulary (0 = uniform).
    pub token_skew: f64,
    /// Observation probability per display position; weights become
    /// `1 / propensity[clicked position]`.
    pub propensity: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_queries: 5000,
            dev_queries: 1000,
            test_queries: 1000,
            num_clusters: 4,
            vocab_size: 200,
            click_rules: Vec::new(),
            noise_rate: 0.1,
            shared_token_fraction: 0.1,
            num_candidates: super::DEFAULT_NUM_CANDIDATES,
            query_tokens: 3,
            doc_tokens: 8,
            doc_topic_fraction: 0.8,
            max_copy_rate: 0.5,
            token_skew: 0.0,
            propensity: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_clusters < 2 {
            return bad(format!("num_clusters = {} < 2", self.num_clusters));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return bad(format!("noise_rate = {} outside [0, 0.5)", self.noise_rate));
        }
        if !(0.0..1.0).contains(&self.shared_token_fraction) {
            return bad("shared_token_fraction outside [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.doc_topic_fraction) || !(0.0..=1.0).contains(&self.max_copy_rate) {
            return bad("doc_topic_fraction and max_copy_rate must lie in [0, 1]".into());
        }
        if self.vocab_size == 0 || self.query_tokens == 0 || self.doc_tokens == 0 {
            return bad("vocab_size, query_tokens and doc_tokens must be positive".into());
        }
        if self.num_candidates < 2 {
            return bad(format!("num_candidates = {} < 2", self.num_candidates));
        }
        if self.train_queries == 0 || self.dev_queries == 0 || self.test_queries == 0 {
            return bad("every split needs at least one query".into());
        }
        if !self.click_rules.is_empty() && self.click_rules.len() != self.num_clusters {
            return bad(format!(
                "{} click rules for {} clusters",
                self.click_rules.len(),
                self.num_clusters
            ));
        }
        if !(self.token_skew.is_finite() && self.token_skew >= 0.0) {
            return bad("token_skew must be non-negative".into());
        }
        if let Some(p) = &self.propensity {
            if p.len() != self.num_candidates {
                return bad(format!(
                    "propensity table has {} entries for {} positions",
                    p.len(),
                    self.num_candidates
                ));
            }
            if p.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return bad("propensities must lie in (0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn rule(&self, cluster: usize) -> ClickRule {
        match self.click_rules.get(cluster) {
            Some(r) => *r,
            None if cluster % 2 == 0 => ClickRule::RecencyPreferring,
            None => ClickRule::ContentMatchPreferring,
        }
    }

    fn shared_pool_size(&self) -> usize {
        ((self.vocab_size as f64 * self.shared_token_fraction).round() as usize).max(1)
    }

    pub fn schema() -> Schema {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Schema {
            query_sparse: own(SYNTH_SCHEMA.0),
            query_dense: own(SYNTH_SCHEMA.1),
            doc_sparse: own(SYNTH_SCHEMA.2),
            doc_dense: own(SYNTH_SCHEMA.3),
        }
    }
}

/// Name of the `j`-th n-gram of planted cluster `c`.
pub fn cluster_token(c: usize, j: usize) -> String {
    format!("c{c}_w{j}")
}

fn shared_token(j: usize) -> String {
    format!("shared_w{j}")
}

/// Generator-side ground truth for one split, aligned with its records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTruth {
    pub planted_cluster: Vec<usize>,
    /// Candidate the click rule picked before noise was applied.
    pub rule_choice: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub truth: [SplitTruth; 3],
}

impl SyntheticCorpus {
    pub fn truth_for(&self, split: SplitTag) -> &SplitTruth {
        match split {
            SplitTag::Train => &self.truth[0],
            SplitTag::Dev => &self.truth[1],
            SplitTag::Test => &self.truth[2],
        }
    }
}

/// Planted cluster encoded in an n-gram token name, if any.
pub fn planted_cluster_of_token(token: &str) -> Option<usize> {
    let rest = token.strip_prefix('c')?;
    let (num, _) = rest.split_once("_w")?;
    num.parse().ok()
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    vocab_dist: Option<WeightedIndex<f64>>,
    shared_dist: Option<WeightedIndex<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        let zipf = |n: usize| {
            if cfg.token_skew == 0.0 {
                None
            } else {
                let w: Vec<f64> = (0..n).map(|j| 1.0 / ((j + 1) as f64).powf(cfg.token_skew)).collect();
                Some(WeightedIndex::new(w).expect("positive weights"))
            }
        };
        Self {
            cfg,
            vocab_dist: zipf(cfg.vocab_size),
            shared_dist: zipf(cfg.shared_pool_size()),
        }
    }

    fn pick(dist: &Option<WeightedIndex<f64>>, n: usize, rng: &mut ChaCha8Rng) -> usize {
        match dist {
            Some(d) => d.sample(rng),
            None => rng.random_range(0..n),
        }
    }

    fn topic_token(&self, cluster: usize, rng: &mut ChaCha8Rng) -> String {
        if rng.random_bool(self.cfg.shared_token_fraction) {
            shared_token(Self::pick(&self.shared_dist, self.cfg.shared_pool_size(), rng))
        } else {
            cluster_token(cluster, Self::pick(&self.vocab_dist, self.cfg.vocab_size, rng))
        }
    }
}

fn counted(tokens: Vec<String>) -> Vec<(String, u32)> {
    let mut out: Vec<(String, u32)> = Vec::new();
    let mut sorted = tokens;
    sorted.sort();
    for t in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == t => *c += 1,
            _ => out.push((t, 1)),
        }
    }
    out
}

fn generate_query(
    cfg: &SynthConfig,
    sampler: &Sampler<'_>,
    rng: &mut ChaCha8Rng,
    global_index: usize,
) -> (QueryRecord, usize, usize) {
    let cluster = rng.random_range(0..cfg.num_clusters);
    let query_ngrams: Vec<String> = (0..cfg.query_tokens)
        .map(|_| sampler.topic_token(cluster, rng))
        .collect();
    let query_set: BTreeSet<&String> = query_ngrams.iter().collect();

    let mut q_sparse = SparseFields::new();
    q_sparse.insert("ngram".into(), counted(query_ngrams.clone()));
    q_sparse.insert(
        "category".into(),
        vec![(format!("cat{}", rng.random_range(0..NUM_CATEGORIES)), 1)],
    );
    q_sparse.insert(
        "language".into(),
        vec![(LANGUAGES[rng.random_range(0..LANGUAGES.len())].to_string(), 1)],
    );
    let hour = rng.random::<f64>();

    let query_id = format!("q{global_index:07}");
    let mut candidates = Vec::with_capacity(cfg.num_candidates);
    let mut overlaps = Vec::with_capacity(cfg.num_candidates);
    let mut recencies = Vec::with_capacity(cfg.num_candidates);
    for j in 0..cfg.num_candidates {
        let copy_rate = rng.random::<f64>() * cfg.max_copy_rate;
        let mut ngrams = Vec::with_capacity(cfg.doc_tokens);
        for _ in 0..cfg.doc_tokens {
            if rng.random_bool(copy_rate) {
                ngrams.push(query_ngrams[rng.random_range(0..query_ngrams.len())].clone());
            } else {
                let topic = if rng.random_bool(cfg.doc_topic_fraction) {
                    cluster
                } else {
                    rng.random_range(0..cfg.num_clusters)
                };
                ngrams.push(sampler.topic_token(topic, rng));
            }
        }
        let overlap = ngrams.iter().filter(|t| query_set.contains(t)).count();
        let template_cluster = if rng.random_bool(cfg.doc_topic_fraction) {
            cluster
        } else {
            rng.random_range(0..cfg.num_clusters)
        };
        let recency = rng.random::<f64>();

        let mut sparse = SparseFields::new();
        sparse.insert("ngram".into(), counted(ngrams));
        sparse.insert(
            "category".into(),
            vec![(format!("cat{}", rng.random_range(0..NUM_CATEGORIES)), 1)],
        );
        sparse.insert(
            "structure".into(),
            vec![(
                format!("c{template_cluster}_tmpl{}", rng.random_range(0..TEMPLATES_PER_CLUSTER)),
                1,
            )],
        );
        let mut dense = std::collections::BTreeMap::new();
        dense.insert("recency".into(), recency);
        dense.insert("text_match".into(), overlap as f64 / cfg.doc_tokens as f64);
        candidates.push(DocumentRecord {
            doc_id: format!("{query_id}-d{j}"),
            sparse_fields: sparse,
            dense_fields: dense,
        });
        overlaps.push(overlap);
        recencies.push(recency);
    }

    let rule_choice = match cfg.rule(cluster) {
        ClickRule::RecencyPreferring => (0..cfg.num_candidates)
            .max_by(|&a, &b| recencies[a].total_cmp(&recencies[b]))
            .expect("at least two candidates"),
        ClickRule::ContentMatchPreferring => {
            let best = *overlaps.iter().max().expect("candidates");
            let tied: Vec<usize> = (0..cfg.num_candidates).filter(|&j| overlaps[j] == best).collect();
            tied[rng.random_range(0..tied.len())]
        }
    };
    let clicked = if rng.random_bool(cfg.noise_rate) {
        rng.random_range(0..cfg.num_candidates)
    } else {
        rule_choice
    };
    let propensity_weight = cfg.propensity.as_ref().map_or(1.0, |p| 1.0 / p[clicked]);

    let record = QueryRecord {
        query_id,
        timestamp: BASE_TIMESTAMP + global_index as i64 * 1000,
        sparse_fields: q_sparse,
        dense_fields: [("hour".to_string(), hour)].into(),
        candidates,
        clicked_index: clicked,
        propensity_weight,
    };
    (record, cluster, rule_choice)
}

/// Generates chronologically ordered train/dev/test splits.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = Sampler::new(config);
    let schema = SynthConfig::schema();

    let mut next_index = 0usize;
    let mut make_split = |tag: SplitTag, n: usize, rng: &mut ChaCha8Rng| {
        let mut records = Vec::with_capacity(n);
        let mut truth = SplitTruth {
            planted_cluster: Vec::with_capacity(n),
            rule_choice: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let (rec, cluster, choice) = generate_query(config, &sampler, rng, next_index);
            next_index += 1;
            records.push(rec);
            truth.planted_cluster.push(cluster);
            truth.rule_choice.push(choice);
        }
        (
            Dataset {
                schema: schema.clone(),
                split: tag,
                records,
            },
            truth,
        )
    };
    let (train, t0) = make_split(SplitTag::Train, config.train_queries, &mut rng);
    let (dev, t1) = make_split(SplitTag::Dev, config.dev_queries, &mut rng);
    let (test, t2) = make_split(SplitTag::Test, config.test_queries, &mut rng);
    Ok(SyntheticCorpus {
        train,
        dev,
        test,
        truth: [t0, t1, t2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_dataset;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            train_queries: 300,
            dev_queries: 50,
            test_queries: 50,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small(0);
        c.num_clusters = 1;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        let mut c = small(0);
        c.noise_rate = 0.5;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        let mut c = small(0);
        c.propensity = Some(vec![1.0; 3]);
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_recency_cluster_clicks_freshest() {
        let cfg = SynthConfig {
            num_clusters: 2,
            noise_rate: 0.0,
            click_rules: vec![ClickRule::RecencyPreferring, ClickRule::ContentMatchPreferring],
            ..small(5)
        };
        let corpus = generate_synthetic(&cfg).unwrap();
        let mut checked = 0;
        for (rec, &c) in corpus.train.records.iter().zip(&corpus.truth[0].planted_cluster) {
            if c != 0 {
                continue;
            }
            let best = rec
                .candidates
                .iter()
                .map(|d| d.dense_fields["recency"])
                .fold(f64::MIN, f64::max);
            assert_eq!(rec.clicked().dense_fields["recency"], best);
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let bytes = |seed| {
            let c = generate_synthetic(&small(seed)).unwrap();
            let mut buf = Vec::new();
            for d in [&c.train, &c.dev, &c.test] {
                write_dataset(d, &mut buf).unwrap();
            }
            buf
        };
        assert_eq!(bytes(3), bytes(3));
        assert_ne!(bytes(3), bytes(4));
    }

    #[test]
    fn records_are_valid_and_chronological() {
        let c = generate_synthetic(&small(8)).unwrap();
        for d in [&c.train, &c.dev, &c.test] {
            d.validate().unwrap();
        }
        let max_train = c.train.records.iter().map(|r| r.timestamp).max().unwrap();
        let min_dev = c.dev.records.iter().map(|r| r.timestamp).min().unwrap();
        assert!(max_train < min_dev);
    }

    #[test]
    fn propensity_table_sets_inverse_weights() {
        let cfg = SynthConfig {
            propensity: Some(vec![1.0, 0.5, 0.25, 0.25, 0.2, 0.1]),
            ..small(1)
        };
        let c = generate_synthetic(&cfg).unwrap();
        for r in &c.train.records {
            let p = cfg.propensity.as_ref().unwrap()[r.clicked_index];
            assert_eq!(r.propensity_weight, 1.0 / p);
        }
    }

    #[test]
    fn click_agreement_matches_noise_model() {
        // Agreement probability is 1 − ρ(N−1)/N; check within 3 binomial σ.
        let cfg = SynthConfig {
            train_queries: 10_000,
            dev_queries: 1,
            test_queries: 1,
            noise_rate: 0.2,
            ..small(21)
        };
        let c = generate_synthetic(&cfg).unwrap();
        let agree = c
            .train
            .records
            .iter()
            .zip(&c.truth[0].rule_choice)
            .filter(|(r, &choice)| r.clicked_index == choice)
            .count() as f64;
        let n = 10_000.0;
        let n_cand = cfg.num_candidates as f64;
        let p = 1.0 - cfg.noise_rate * (n_cand - 1.0) / n_cand;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((agree / n - p).abs() < 3.0 * sigma, "agreement {}", agree / n);
    }

    #[test]
    fn token_names_decode_to_planted_cluster() {
        assert_eq!(planted_cluster_of_token(&cluster_token(3, 17)), Some(3));
        assert_eq!(planted_cluster_of_token("shared_w2"), None);
    }
}

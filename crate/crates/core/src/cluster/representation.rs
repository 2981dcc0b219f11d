use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{QueryRecord, SparseFields};
use crate::linalg::SparseVector;

pub const DEFAULT_TOP_K_DOCS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CountTransform {
    #[default]
    Raw,
    Log1p,
}

impl CountTransform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            CountTransform::Raw => v,
            CountTransform::Log1p => v.ln_1p(),
        }
    }
}

impl std::str::FromStr for CountTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(CountTransform::Raw),
            "log1p" => Ok(CountTransform::Log1p),
            other => Err(format!("unknown count transform `{other}` (raw|log1p)")),
        }
    }
}

/// Which sparse fields feed the query representation and how many
/// baseline-ranked documents are aggregated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub fields: Vec<String>,
    pub top_k: usize,
    /// Dense document field the baseline ranker uses to break score ties.
    pub recency_field: String,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            fields: vec!["ngram".into(), "category".into(), "structure".into()],
            top_k: DEFAULT_TOP_K_DOCS,
            recency_field: "recency".into(),
        }
    }
}

pub fn feature_name(field: &str, token: &str) -> String {
    format!("{field}:{token}")
}

fn add_fields(acc: &mut BTreeMap<String, u32>, fields: &SparseFields, allowed: &[String]) {
    for f in allowed {
        if let Some(tokens) = fields.get(f) {
            for (t, c) in tokens {
                *acc.entry(feature_name(f, t)).or_default() += c;
            }
        }
    }
}

/// Named token counts of the query plus its `top_k` ranked candidates.
/// `top_k` beyond the candidate count aggregates all candidates.
pub fn build_query_representation(
    query: &QueryRecord,
    ranked_candidates: &[usize],
    config: &RepresentationConfig,
) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    add_fields(&mut counts, &query.sparse_fields, &config.fields);
    for &j in ranked_candidates.iter().take(config.top_k) {
        add_fields(&mut counts, &query.candidates[j].sparse_fields, &config.fields);
    }
    counts
}

/// Feature vocabulary frozen on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVocabulary {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl FeatureVocabulary {
    /// Sorted union of all feature names.
    pub fn fit<'a>(representations: impl IntoIterator<Item = &'a BTreeMap<String, u32>>) -> Self {
        let mut all: std::collections::BTreeSet<&str> = Default::default();
        for r in representations {
            all.extend(r.keys().map(String::as_str));
        }
        Self::from_names(all.into_iter().map(str::to_string).collect())
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Maps named counts into the frozen space; unseen names are dropped.
    pub fn vectorize(&self, counts: &BTreeMap<String, u32>) -> QueryVector {
        let entries = counts
            .iter()
            .filter_map(|(n, &c)| self.get(n).map(|i| (i, c as f64)))
            .collect();
        QueryVector {
            counts: SparseVector::from_entries(entries),
        }
    }
}

/// Non-negative count vector of a query over the feature vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryVector {
    pub counts: SparseVector,
}

impl QueryVector {
    pub fn transformed(&self, t: CountTransform) -> SparseVector {
        self.counts.map_values(|v| t.apply(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;

    fn rec(query_tokens: &[(&str, u32)], docs: &[&[(&str, u32)]]) -> QueryRecord {
        let sf = |toks: &[(&str, u32)]| -> SparseFields {
            [(
                "ngram".to_string(),
                toks.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
            )]
            .into()
        };
        QueryRecord {
            query_id: "q".into(),
            timestamp: 0,
            sparse_fields: sf(query_tokens),
            dense_fields: Default::default(),
            candidates: docs
                .iter()
                .enumerate()
                .map(|(j, t)| DocumentRecord {
                    doc_id: format!("d{j}"),
                    sparse_fields: sf(t),
                    dense_fields: Default::default(),
                })
                .collect(),
            clicked_index: 0,
            propensity_weight: 1.0,
        }
    }

    fn cfg(top_k: usize) -> RepresentationConfig {
        RepresentationConfig {
            fields: vec!["ngram".into()],
            top_k,
            recency_field: "recency".into(),
        }
    }

    #[test]
    fn top_k_zero_is_query_only() {
        let q = rec(&[("skopje trip", 1)], &[&[("to skopje", 1)], &[("x", 2)]]);
        let r = build_query_representation(&q, &[0, 1], &cfg(0));
        assert_eq!(r, [("ngram:skopje trip".to_string(), 1)].into());
    }

    #[test]
    fn bigram_in_query_and_twice_in_top_docs_counts_three() {
        let q = rec(
            &[("to skopje", 1)],
            &[&[("to skopje", 1)], &[("hotel", 1)], &[("to skopje", 1)], &[("a", 1)], &[("to skopje", 5)]],
        );
        // Only the top 4 ranked documents (0..4) are aggregated.
        let r = build_query_representation(&q, &[0, 1, 2, 3, 4], &cfg(4));
        assert_eq!(r["ngram:to skopje"], 3);
    }

    #[test]
    fn oversized_top_k_clamps_to_all_candidates() {
        let q = rec(&[], &[&[("a", 1)], &[("a", 1)]]);
        let r = build_query_representation(&q, &[1, 0], &cfg(10));
        assert_eq!(r["ngram:a"], 2);
    }

    #[test]
    fn matches_concatenate_and_count_oracle() {
        let q = rec(
            &[("a", 2), ("b", 1)],
            &[&[("a", 1), ("c", 3)], &[("b", 2)], &[("d", 1)]],
        );
        let ranked = [2, 0, 1];
        let r = build_query_representation(&q, &ranked, &cfg(2));
        let mut multiset: Vec<String> = Vec::new();
        let mut push = |toks: &Vec<(String, u32)>| {
            for (t, c) in toks {
                for _ in 0..*c {
                    multiset.push(format!("ngram:{t}"));
                }
            }
        };
        push(&q.sparse_fields["ngram"]);
        for &j in &ranked[..2] {
            push(&q.candidates[j].sparse_fields["ngram"]);
        }
        let mut oracle: HashMap<String, u32> = HashMap::new();
        for t in multiset {
            *oracle.entry(t).or_default() += 1;
        }
        assert_eq!(r.len(), oracle.len());
        for (k, v) in &r {
            assert_eq!(oracle[k], *v);
        }
    }

    #[test]
    fn unseen_features_are_dropped() {
        let vocab = FeatureVocabulary::from_names(vec!["ngram:a".into(), "ngram:b".into()]);
        let v = vocab.vectorize(&[("ngram:b".to_string(), 2), ("ngram:zzz".to_string(), 7)].into());
        assert_eq!(v.counts.indices, vec![1]);
        assert_eq!(v.counts.values, vec![2.0]);
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, ClusterTree};
use crate::corpus::{Dataset, QueryRecord};
use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: u32 = 0;

/// Ordered list of strings with a lookup table rebuilt after loading.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicon {
    entries: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Lexicon {
    pub fn new(entries: Vec<String>) -> Self {
        let mut l = Self {
            entries,
            index: HashMap::new(),
        };
        l.reindex();
        l
    }

    pub fn reindex(&mut self) {
        self.index = self.entries.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Token ids of one sparse field; id 0 is UNK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub lexicon: Lexicon,
}

impl TokenVocab {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut entries = vec![UNK_TOKEN.to_string()];
        entries.extend(tokens.into_iter().filter(|t| t != UNK_TOKEN));
        Self {
            lexicon: Lexicon::new(entries),
        }
    }

    /// Rows of the embedding table, UNK included.
    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.lexicon.get(token).unwrap_or(UNK_ID)
    }

    pub fn reindex(&mut self) {
        self.lexicon.reindex();
    }
}

fn count_fields(freq: &mut BTreeMap<String, BTreeMap<String, u64>>, fields: &crate::corpus::SparseFields) {
    for (field, tokens) in fields {
        let f = freq.entry(field.clone()).or_default();
        for (t, c) in tokens {
            *f.entry(t.clone()).or_default() += *c as u64;
        }
    }
}

/// Per-field vocabularies from the training split. A token's frequency is its
/// summed count over queries and documents; tokens below `min_freq` map to UNK.
/// Query and document fields sharing a name share a vocabulary.
pub fn build_vocab(train: &Dataset, min_freq: u64) -> BTreeMap<String, TokenVocab> {
    let mut freq: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for f in train.schema.query_sparse.iter().chain(&train.schema.doc_sparse) {
        freq.entry(f.clone()).or_default();
    }
    for q in &train.records {
        count_fields(&mut freq, &q.sparse_fields);
        for d in &q.candidates {
            count_fields(&mut freq, &d.sparse_fields);
        }
    }
    freq.into_iter()
        .map(|(field, tokens)| {
            let kept = tokens.into_iter().filter(|(_, c)| *c >= min_freq).map(|(t, _)| t);
            (field, TokenVocab::from_tokens(kept))
        })
        .collect()
}

/// All valid cluster paths of a tree, every level, in pre-order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVocabulary {
    pub lexicon: Lexicon,
}

impl ClusterVocabulary {
    pub fn from_tree(tree: &ClusterTree) -> Result<Self> {
        let paths = tree.valid_clusters();
        if paths.is_empty() {
            return Err(Error::Config("the cluster tree has no valid clusters".into()));
        }
        Ok(Self {
            lexicon: Lexicon::new(paths),
        })
    }

    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }

    pub fn id(&self, path: &str) -> Option<u32> {
        self.lexicon.get(path)
    }

    /// Uniform mass over the assigned paths found in the vocabulary.
    pub fn target(&self, assignment: &ClusterAssignment) -> Vec<(u32, f64)> {
        let ids: Vec<u32> = assignment.paths.iter().filter_map(|p| self.id(p)).collect();
        let mass = 1.0 / ids.len() as f64;
        ids.into_iter().map(|i| (i, mass)).collect()
    }
}

/// Cross features `path & field=token`, one per assigned cluster path and per
/// token of each configured wide field.
pub fn wide_cross_features(query: &QueryRecord, assignment: &ClusterAssignment, wide_fields: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for path in &assignment.paths {
        for field in wide_fields {
            for (token, _) in query.sparse_fields.get(field).into_iter().flatten() {
                out.insert(format!("{path}&{field}={token}"));
            }
        }
    }
    out
}

/// Exact, collision-free map of the cross features seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideVocabulary {
    pub fields: Vec<String>,
    pub lexicon: Lexicon,
}

impl WideVocabulary {
    pub fn fit<'a>(
        records: &[QueryRecord],
        assignments: impl IntoIterator<Item = &'a ClusterAssignment>,
        fields: &[String],
    ) -> Self {
        let mut all = BTreeSet::new();
        for (q, a) in records.iter().zip(assignments) {
            all.extend(wide_cross_features(q, a, fields));
        }
        Self {
            fields: fields.to_vec(),
            lexicon: Lexicon::new(all.into_iter().collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }

    /// Active ids, sorted; crosses unseen in training are dropped.
    pub fn encode(&self, query: &QueryRecord, assignment: &ClusterAssignment) -> Vec<u32> {
        let mut ids: Vec<u32> = wide_cross_features(query, assignment, &self.fields)
            .iter()
            .filter_map(|k| self.lexicon.get(k))
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocumentRecord, Schema, SplitTag};

    fn record(q: &[(&str, &str, u32)], d: &[(&str, &str, u32)]) -> QueryRecord {
        let fields = |toks: &[(&str, &str, u32)]| {
            let mut m: crate::corpus::SparseFields = BTreeMap::new();
            for (f, t, c) in toks {
                m.entry(f.to_string()).or_default().push((t.to_string(), *c));
            }
            m
        };
        QueryRecord {
            query_id: "q".into(),
            timestamp: 0,
            sparse_fields: fields(q),
            dense_fields: Default::default(),
            candidates: vec![
                DocumentRecord {
                    doc_id: "a".into(),
                    sparse_fields: fields(d),
                    dense_fields: Default::default(),
                },
                DocumentRecord {
                    doc_id: "b".into(),
                    sparse_fields: Default::default(),
                    dense_fields: Default::default(),
                },
            ],
            clicked_index: 0,
            propensity_weight: 1.0,
        }
    }

    fn dataset(records: Vec<QueryRecord>) -> Dataset {
        Dataset {
            schema: Schema {
                query_sparse: vec!["ngram".into(), "language".into()],
                query_dense: vec![],
                doc_sparse: vec!["ngram".into()],
                doc_dense: vec![],
            },
            split: SplitTag::Train,
            records,
        }
    }

    #[test]
    fn min_freq_one_keeps_everything_seen() {
        let ds = dataset(vec![record(&[("ngram", "a", 1), ("language", "en", 1)], &[("ngram", "b", 1)])]);
        let v = build_vocab(&ds, 1);
        assert_eq!(v["ngram"].len(), 3);
        assert_ne!(v["ngram"].id("a"), UNK_ID);
        assert_ne!(v["ngram"].id("b"), UNK_ID);
        assert_eq!(v["ngram"].id("never"), UNK_ID);
        assert_eq!(v["ngram"].id(UNK_TOKEN), UNK_ID);
    }

    #[test]
    fn threshold_boundary() {
        // "a": 2 in the query + 1 in a document = 3; "b": 2.
        let ds = dataset(vec![record(&[("ngram", "a", 2)], &[("ngram", "a", 1), ("ngram", "b", 2)])]);
        let v = build_vocab(&ds, 3);
        assert_ne!(v["ngram"].id("a"), UNK_ID);
        assert_eq!(v["ngram"].id("b"), UNK_ID);
    }

    #[test]
    fn vocab_is_deterministic() {
        let ds = dataset(vec![
            record(&[("ngram", "z", 1), ("ngram", "y", 1)], &[("ngram", "x", 1)]),
            record(&[("ngram", "y", 1)], &[("ngram", "w", 4)]),
        ]);
        let a = build_vocab(&ds, 1);
        let b = build_vocab(&ds, 1);
        assert_eq!(a, b);
        for t in ["w", "x", "y", "z"] {
            assert_eq!(a["ngram"].id(t), b["ngram"].id(t));
        }
    }

    #[test]
    fn cross_features_per_level() {
        let q = record(&[("language", "English", 1)], &[]);
        let a = ClusterAssignment {
            paths: vec!["1".into(), "1.1".into()],
        };
        let got = wide_cross_features(&q, &a, &["language".into()]);
        let want: BTreeSet<String> = ["1&language=English", "1.1&language=English"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want);
        assert!(wide_cross_features(&q, &ClusterAssignment::default(), &["language".into()]).is_empty());
    }

    #[test]
    fn cross_count_is_levels_times_tokens() {
        let q = record(
            &[("language", "en", 1), ("category", "c1", 1), ("category", "c2", 1), ("ngram", "x", 1)],
            &[],
        );
        let fields: Vec<String> = vec!["language".into(), "category".into()];
        for levels in 0..4 {
            let a = ClusterAssignment {
                paths: (0..levels).map(|l| vec!["1"; l + 1].join(".")).collect(),
            };
            let crosses = wide_cross_features(&q, &a, &fields);
            assert_eq!(crosses.len(), levels * 3);
            for c in &crosses {
                assert_eq!(c.matches('&').count(), 1);
                assert!(a.paths.iter().any(|p| c.starts_with(&format!("{p}&"))));
            }
        }
    }

    #[test]
    fn uniform_cluster_target() {
        let v = ClusterVocabulary {
            lexicon: Lexicon::new(vec!["1".into(), "1.1".into(), "1.1.2".into(), "2".into()]),
        };
        let t = v.target(&ClusterAssignment {
            paths: vec!["1".into(), "1.1".into(), "1.1.2".into()],
        });
        assert_eq!(t, vec![(0, 1.0 / 3.0), (1, 1.0 / 3.0), (2, 1.0 / 3.0)]);
    }
}

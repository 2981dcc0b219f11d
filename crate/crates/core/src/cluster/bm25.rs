//! BM25 baseline ranker used to pre-rank candidates before aggregating
//! top-document features into the query representation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, DocumentRecord, QueryRecord};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Document statistics gathered from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub k1: f64,
    pub b: f64,
    /// Sparse fields present on both queries and documents.
    pub fields: Vec<String>,
    /// Dense document field used as the first tie-break.
    pub recency_field: String,
    num_docs: usize,
    avg_doc_len: f64,
    doc_freq: BTreeMap<String, usize>,
}

fn term_key(field: &str, token: &str) -> String {
    format!("{field}:{token}")
}

/// Total token count over all sparse fields of a document.
pub fn doc_length(doc: &DocumentRecord) -> f64 {
    doc.sparse_fields
        .values()
        .flat_map(|v| v.iter().map(|(_, c)| *c as f64))
        .sum()
}

impl Bm25Index {
    pub fn fit(train: &Dataset, recency_field: &str) -> Self {
        let fields: Vec<String> = train
            .schema
            .query_sparse
            .iter()
            .filter(|f| train.schema.doc_sparse.contains(f))
            .cloned()
            .collect();
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut num_docs = 0usize;
        let mut total_len = 0.0;
        for rec in &train.records {
            for doc in &rec.candidates {
                num_docs += 1;
                total_len += doc_length(doc);
                let mut seen = BTreeSet::new();
                for f in &fields {
                    if let Some(tokens) = doc.sparse_fields.get(f) {
                        for (t, _) in tokens {
                            seen.insert(term_key(f, t));
                        }
                    }
                }
                for key in seen {
                    *doc_freq.entry(key).or_default() += 1;
                }
            }
        }
        let avg_doc_len = if num_docs == 0 { 0.0 } else { total_len / num_docs as f64 };
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            fields,
            recency_field: recency_field.to_string(),
            num_docs,
            avg_doc_len,
            doc_freq,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_freq(&self, field: &str, token: &str) -> usize {
        self.doc_freq.get(&term_key(field, token)).copied().unwrap_or(0)
    }

    pub fn idf(&self, field: &str, token: &str) -> f64 {
        let n = self.num_docs as f64;
        let df = self.doc_freq(field, token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score summed over the distinct query terms of the shared fields.
    pub fn score(&self, query: &QueryRecord, doc: &DocumentRecord) -> f64 {
        let dl = doc_length(doc);
        let norm = if self.avg_doc_len > 0.0 {
            1.0 - self.b + self.b * dl / self.avg_doc_len
        } else {
            1.0
        };
        let mut score = 0.0;
        for f in &self.fields {
            let (Some(q_tokens), Some(d_tokens)) = (query.sparse_fields.get(f), doc.sparse_fields.get(f))
            else {
                continue;
            };
            let terms: BTreeSet<&str> = q_tokens.iter().map(|(t, _)| t.as_str()).collect();
            for term in terms {
                let tf: f64 = d_tokens
                    .iter()
                    .filter(|(t, _)| t == term)
                    .map(|(_, c)| *c as f64)
                    .sum();
                if tf == 0.0 {
                    continue;
                }
                score += self.idf(f, term) * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        score
    }

    /// Candidate indices ordered by descending BM25, then descending recency,
    /// then ascending `doc_id`.
    pub fn rank(&self, query: &QueryRecord) -> Vec<usize> {
        let scores: Vec<f64> = query.candidates.iter().map(|d| self.score(query, d)).collect();
        let recency = |i: usize| {
            query.candidates[i]
                .dense_fields
                .get(&self.recency_field)
                .copied()
                .unwrap_or(f64::NEG_INFINITY)
        };
        let mut order: Vec<usize> = (0..query.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| recency(b).total_cmp(&recency(a)))
                .then_with(|| query.candidates[a].doc_id.cmp(&query.candidates[b].doc_id))
        });
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Schema, SplitTag};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc(id: &str, tokens: &[(&str, u32)], recency: f64) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            sparse_fields: [(
                "ngram".to_string(),
                tokens.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
            )]
            .into(),
            dense_fields: [("recency".to_string(), recency)].into(),
        }
    }

    fn query(tokens: &[&str], docs: Vec<DocumentRecord>) -> QueryRecord {
        QueryRecord {
            query_id: "q".into(),
            timestamp: 0,
            sparse_fields: [(
                "ngram".to_string(),
                tokens.iter().map(|t| (t.to_string(), 1)).collect(),
            )]
            .into(),
            dense_fields: Default::default(),
            candidates: docs,
            clicked_index: 0,
            propensity_weight: 1.0,
        }
    }

    fn dataset(records: Vec<QueryRecord>) -> Dataset {
        Dataset {
            schema: Schema {
                query_sparse: vec!["ngram".into()],
                query_dense: vec![],
                doc_sparse: vec!["ngram".into()],
                doc_dense: vec!["recency".into()],
            },
            split: SplitTag::Train,
            records,
        }
    }

    #[test]
    fn more_overlap_ranks_first() {
        let q = query(
            &["a", "b"],
            vec![doc("x", &[("z", 2)], 0.9), doc("y", &[("a", 1), ("b", 1)], 0.1)],
        );
        let idx = Bm25Index::fit(&dataset(vec![q.clone()]), "recency");
        assert_eq!(idx.rank(&q), vec![1, 0]);
    }

    #[test]
    fn identical_candidates_fall_back_to_doc_id() {
        let q = query(
            &["a"],
            vec![
                doc("c", &[("a", 1)], 0.5),
                doc("a", &[("a", 1)], 0.5),
                doc("b", &[("a", 1)], 0.5),
            ],
        );
        let idx = Bm25Index::fit(&dataset(vec![q.clone()]), "recency");
        assert_eq!(idx.rank(&q), vec![1, 2, 0]);
    }

    #[test]
    fn recency_breaks_score_ties() {
        let q = query(&["a"], vec![doc("a", &[("z", 1)], 0.1), doc("b", &[("y", 1)], 0.7)]);
        let idx = Bm25Index::fit(&dataset(vec![q.clone()]), "recency");
        assert_eq!(idx.rank(&q), vec![1, 0]);
    }

    /// Independent scalar reference: explicit loops over raw token lists.
    fn reference_bm25(train: &[QueryRecord], q: &QueryRecord, d: &DocumentRecord) -> f64 {
        let (k1, b) = (1.2, 0.75);
        let mut n = 0.0;
        let mut total = 0.0;
        for r in train {
            for doc in &r.candidates {
                n += 1.0;
                for (_, c) in &doc.sparse_fields["ngram"] {
                    total += *c as f64;
                }
            }
        }
        let avg = total / n;
        let mut dl = 0.0;
        for (_, c) in &d.sparse_fields["ngram"] {
            dl += *c as f64;
        }
        let mut seen: Vec<&String> = Vec::new();
        let mut s = 0.0;
        for (t, _) in &q.sparse_fields["ngram"] {
            if seen.contains(&t) {
                continue;
            }
            seen.push(t);
            let mut df = 0.0;
            for r in train {
                for doc in &r.candidates {
                    if doc.sparse_fields["ngram"].iter().any(|(x, _)| x == t) {
                        df += 1.0;
                    }
                }
            }
            let mut tf = 0.0;
            for (x, c) in &d.sparse_fields["ngram"] {
                if x == t {
                    tf += *c as f64;
                }
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg));
        }
        s
    }

    #[test]
    fn matches_scalar_reference_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vocab = ["a", "b", "c", "d", "e", "f", "g"];
        let rand_doc = |rng: &mut ChaCha8Rng, id: usize| {
            let n = rng.random_range(1..5);
            let toks: Vec<(&str, u32)> = (0..n)
                .map(|_| (vocab[rng.random_range(0..vocab.len())], rng.random_range(1..4)))
                .collect();
            let mut merged: Vec<(&str, u32)> = Vec::new();
            for (t, c) in toks {
                match merged.iter_mut().find(|(x, _)| *x == t) {
                    Some((_, k)) => *k += c,
                    None => merged.push((t, c)),
                }
            }
            doc(&format!("d{id}"), &merged, rng.random())
        };
        for case in 0..100 {
            let train: Vec<QueryRecord> = (0..4)
                .map(|i| {
                    let docs = (0..3).map(|j| rand_doc(&mut rng, i * 3 + j)).collect();
                    let qt: Vec<&str> = (0..2).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
                    let mut qt = qt;
                    qt.dedup();
                    query(&qt, docs)
                })
                .collect();
            let idx = Bm25Index::fit(&dataset(train.clone()), "recency");
            let probe = &train[case % 4];
            for d in &probe.candidates {
                let got = idx.score(probe, d);
                let want = reference_bm25(&train, probe, d);
                assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
            }
        }
    }
}

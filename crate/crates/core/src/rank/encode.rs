use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::vocab::{build_vocab, ClusterVocabulary, TokenVocab, WideVocabulary};
use crate::cluster::{ClusterAssignment, ClusterTree};
use crate::corpus::{Dataset, DenseFields, QueryRecord, Schema, SparseFields};
use crate::error::{Error, Result};

/// Name of the extra sparse query field holding cluster paths (QC-DPRM).
pub const CLUSTER_FIELD: &str = "query_cluster";

/// One record as (token id, count) lists per sparse slot, plus dense values
/// in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRecord {
    pub sparse: Vec<Vec<(u32, f64)>>,
    pub dense: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuery {
    pub query_id: String,
    pub query: EncodedRecord,
    pub docs: Vec<EncodedRecord>,
    pub doc_ids: Vec<String>,
    pub clicked: usize,
    pub weight: f64,
    /// Active wide cross-feature ids.
    pub wide: Vec<u32>,
    /// Sparse cluster target distribution.
    pub cluster_target: Vec<(u32, f64)>,
}

/// Shapes of the network input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub embedding_dim: usize,
    /// Rows per embedding table.
    pub table_rows: Vec<usize>,
    /// Embedding table used by each query sparse slot.
    pub query_slots: Vec<usize>,
    pub doc_slots: Vec<usize>,
    pub query_dense: usize,
    pub doc_dense: usize,
    pub wide_size: usize,
    pub num_clusters: usize,
}

impl Layout {
    pub fn query_width(&self) -> usize {
        self.query_slots.len() * self.embedding_dim + self.query_dense
    }

    pub fn doc_width(&self) -> usize {
        self.doc_slots.len() * self.embedding_dim + self.doc_dense
    }

    /// Width of `[query | doc A | doc B]`.
    pub fn input_width(&self) -> usize {
        self.query_width() + 2 * self.doc_width()
    }
}

/// Everything frozen on the training split that turns raw records into
/// network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub variant: Variant,
    pub schema: Schema,
    pub query_fields: Vec<String>,
    pub doc_fields: Vec<String>,
    /// One embedding table per distinct field name, sorted.
    pub tables: Vec<String>,
    pub vocabs: BTreeMap<String, TokenVocab>,
    pub clusters: Option<ClusterVocabulary>,
    pub wide: Option<WideVocabulary>,
}

impl FeatureEncoder {
    /// `clusters` carries the tree and the training assignments; QC variants need it.
    pub fn fit(
        train: &Dataset,
        clusters: Option<(&ClusterTree, &[ClusterAssignment])>,
        config: &ModelConfig,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot build features from an empty training split".into()));
        }
        let variant = config.variant;
        let cluster_info = match (variant.needs_clusters(), clusters) {
            (true, None) => {
                return Err(Error::Config(format!("{variant} needs a fitted cluster tree")));
            }
            (true, Some((tree, asg))) => {
                if asg.len() != train.len() {
                    return Err(Error::Dimension(format!(
                        "{} cluster assignments for {} training queries",
                        asg.len(),
                        train.len()
                    )));
                }
                Some((ClusterVocabulary::from_tree(tree)?, asg))
            }
            (false, _) => None,
        };
        let mut vocabs = build_vocab(train, config.vocab_min_freq);
        let mut query_fields = train.schema.query_sparse.clone();
        if variant == Variant::QcDprm {
            if vocabs.contains_key(CLUSTER_FIELD) {
                return Err(Error::Config(format!("the schema already has a `{CLUSTER_FIELD}` field")));
            }
            let (cv, _) = cluster_info.as_ref().expect("clusters checked above");
            vocabs.insert(
                CLUSTER_FIELD.to_string(),
                TokenVocab::from_tokens(cv.lexicon.entries().iter().cloned()),
            );
            query_fields.push(CLUSTER_FIELD.to_string());
        }
        let wide = match (&cluster_info, variant) {
            (Some((_, asg)), Variant::QcWdprm) => {
                for f in &config.wide_fields {
                    if !train.schema.query_sparse.contains(f) {
                        return Err(Error::Config(format!("wide field `{f}` is not a query sparse field")));
                    }
                }
                Some(WideVocabulary::fit(&train.records, asg.iter(), &config.wide_fields))
            }
            _ => None,
        };
        let tables: Vec<String> = vocabs.keys().cloned().collect();
        Ok(Self {
            variant,
            schema: train.schema.clone(),
            query_fields,
            doc_fields: train.schema.doc_sparse.clone(),
            tables,
            vocabs,
            clusters: cluster_info.map(|(cv, _)| cv),
            wide,
        })
    }

    pub fn reindex(&mut self) {
        for v in self.vocabs.values_mut() {
            v.reindex();
        }
        if let Some(c) = &mut self.clusters {
            c.lexicon.reindex();
        }
        if let Some(w) = &mut self.wide {
            w.lexicon.reindex();
        }
    }

    pub fn layout(&self, embedding_dim: usize) -> Layout {
        let slot = |f: &String| self.tables.iter().position(|t| t == f).expect("every field has a table");
        Layout {
            embedding_dim,
            table_rows: self.tables.iter().map(|t| self.vocabs[t].len()).collect(),
            query_slots: self.query_fields.iter().map(slot).collect(),
            doc_slots: self.doc_fields.iter().map(slot).collect(),
            query_dense: self.schema.query_dense.len(),
            doc_dense: self.schema.doc_dense.len(),
            wide_size: self.wide.as_ref().map_or(0, WideVocabulary::len),
            num_clusters: match self.variant {
                Variant::QcMtlrm => self.clusters.as_ref().map_or(0, ClusterVocabulary::len),
                _ => 0,
            },
        }
    }

    fn encode_sparse(&self, fields: &SparseFields, names: &[String], extra: Option<&[String]>) -> Vec<Vec<(u32, f64)>> {
        names
            .iter()
            .map(|name| {
                let vocab = &self.vocabs[name];
                if name == CLUSTER_FIELD {
                    if let Some(paths) = extra {
                        return paths.iter().map(|p| (vocab.id(p), 1.0)).collect();
                    }
                }
                fields
                    .get(name)
                    .into_iter()
                    .flatten()
                    .map(|(t, c)| (vocab.id(t), *c as f64))
                    .collect()
            })
            .collect()
    }

    fn encode_dense(fields: &DenseFields, names: &[String]) -> Vec<f64> {
        names.iter().map(|n| fields.get(n).copied().unwrap_or(0.0)).collect()
    }

    pub fn encode(&self, query: &QueryRecord, assignment: Option<&ClusterAssignment>) -> Result<EncodedQuery> {
        if self.variant.needs_clusters() && assignment.is_none() {
            return Err(Error::Config(format!("{} needs cluster assignments", self.variant)));
        }
        let paths = assignment.map(|a| a.paths.as_slice());
        let docs = query
            .candidates
            .iter()
            .map(|d| EncodedRecord {
                sparse: self.encode_sparse(&d.sparse_fields, &self.doc_fields, None),
                dense: Self::encode_dense(&d.dense_fields, &self.schema.doc_dense),
            })
            .collect();
        let wide = match (&self.wide, assignment) {
            (Some(w), Some(a)) => w.encode(query, a),
            _ => Vec::new(),
        };
        let cluster_target = match (self.variant, &self.clusters, assignment) {
            (Variant::QcMtlrm, Some(c), Some(a)) => c.target(a),
            _ => Vec::new(),
        };
        Ok(EncodedQuery {
            query_id: query.query_id.clone(),
            query: EncodedRecord {
                sparse: self.encode_sparse(&query.sparse_fields, &self.query_fields, paths),
                dense: Self::encode_dense(&query.dense_fields, &self.schema.query_dense),
            },
            docs,
            doc_ids: query.candidates.iter().map(|d| d.doc_id.clone()).collect(),
            clicked: query.clicked_index,
            weight: query.propensity_weight,
            wide,
            cluster_target,
        })
    }

    pub fn encode_all(&self, records: &[QueryRecord], assignments: Option<&[ClusterAssignment]>) -> Result<Vec<EncodedQuery>> {
        if let Some(a) = assignments {
            if a.len() != records.len() {
                return Err(Error::Dimension(format!("{} assignments for {} queries", a.len(), records.len())));
            }
        }
        records
            .iter()
            .enumerate()
            .map(|(i, q)| self.encode(q, assignments.map(|a| &a[i])))
            .collect()
    }
}

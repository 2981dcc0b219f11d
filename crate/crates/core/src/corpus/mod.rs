//! Click-log datasets: records, schema, chronological splits, pair
//! construction, file I/O and a synthetic generator with planted clusters.

mod io;
mod pairs;
mod split;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use io::{
    load_dataset, read_dataset, save_dataset, save_dataset_with_manifest, write_dataset, write_dataset_with_manifest,
    FORMAT_NAME, FORMAT_VERSION,
};
pub use pairs::{build_pairs, clicked_index_from_labels, pairs_for_click, Pair};
pub use split::split_chronological;
pub use synth::{
    cluster_token, generate_synthetic, planted_cluster_of_token, ClickRule, SplitTruth, SynthConfig,
    SyntheticCorpus, SYNTH_SCHEMA,
};

use crate::error::{Error, Result};

/// Sparse field name → `(token, count)` list.
pub type SparseFields = BTreeMap<String, Vec<(String, u32)>>;
/// Dense field name → value.
pub type DenseFields = BTreeMap<String, f64>;

pub const DEFAULT_NUM_CANDIDATES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub sparse_fields: SparseFields,
    pub dense_fields: DenseFields,
}

/// One search request with its candidate list and the single clicked candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub timestamp: i64,
    pub sparse_fields: SparseFields,
    pub dense_fields: DenseFields,
    pub candidates: Vec<DocumentRecord>,
    pub clicked_index: usize,
    pub propensity_weight: f64,
}

impl QueryRecord {
    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn clicked(&self) -> &DocumentRecord {
        &self.candidates[self.clicked_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitTag::Train),
            "dev" => Ok(SplitTag::Dev),
            "test" => Ok(SplitTag::Test),
            other => Err(format!("unknown split `{other}` (train|dev|test)")),
        }
    }
}

/// Declared field names per role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub query_sparse: Vec<String>,
    pub query_dense: Vec<String>,
    pub doc_sparse: Vec<String>,
    pub doc_dense: Vec<String>,
}

impl Schema {
    fn check_fields(
        sparse: &SparseFields,
        dense: &DenseFields,
        allowed_sparse: &[String],
        allowed_dense: &[String],
        what: &str,
    ) -> std::result::Result<(), String> {
        for (name, tokens) in sparse {
            if !allowed_sparse.contains(name) {
                return Err(format!("{what}: undeclared sparse field `{name}`"));
            }
            if let Some((tok, _)) = tokens.iter().find(|(_, c)| *c == 0) {
                return Err(format!("{what}: token `{tok}` in `{name}` has count 0"));
            }
        }
        for (name, value) in dense {
            if !allowed_dense.contains(name) {
                return Err(format!("{what}: undeclared dense field `{name}`"));
            }
            if !value.is_finite() {
                return Err(format!("{what}: dense field `{name}` is not finite"));
            }
        }
        Ok(())
    }

    /// Checks one record against the schema and the single-click invariant.
    pub fn validate_record(&self, rec: &QueryRecord) -> std::result::Result<(), String> {
        let n = rec.candidates.len();
        if n < 2 {
            return Err(format!("query {}: {n} candidates, need at least 2", rec.query_id));
        }
        if rec.clicked_index >= n {
            return Err(format!(
                "query {}: clicked_index {} out of range for {n} candidates",
                rec.query_id, rec.clicked_index
            ));
        }
        if !(rec.propensity_weight.is_finite() && rec.propensity_weight > 0.0) {
            return Err(format!(
                "query {}: propensity weight must be positive",
                rec.query_id
            ));
        }
        Self::check_fields(
            &rec.sparse_fields,
            &rec.dense_fields,
            &self.query_sparse,
            &self.query_dense,
            &format!("query {}", rec.query_id),
        )?;
        for d in &rec.candidates {
            Self::check_fields(
                &d.sparse_fields,
                &d.dense_fields,
                &self.doc_sparse,
                &self.doc_dense,
                &format!("query {} doc {}", rec.query_id, d.doc_id),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub split: SplitTag,
    pub records: Vec<QueryRecord>,
}

impl Dataset {
    /// Validates every record and the fixed-candidate-count rule.
    pub fn validate(&self) -> Result<()> {
        let n = self.records.first().map(QueryRecord::num_candidates);
        for (i, rec) in self.records.iter().enumerate() {
            self.schema
                .validate_record(rec)
                .map_err(|message| Error::Schema { line: i + 2, message })?;
            if Some(rec.num_candidates()) != n {
                return Err(Error::Schema {
                    line: i + 2,
                    message: format!(
                        "query {} has {} candidates, dataset uses {}",
                        rec.query_id,
                        rec.num_candidates(),
                        n.unwrap_or(0)
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_candidates(&self) -> Option<usize> {
        self.records.first().map(QueryRecord::num_candidates)
    }
}

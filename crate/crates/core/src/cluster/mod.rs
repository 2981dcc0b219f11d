//! Query representation and divisive hierarchical query clustering.

mod bm25;
mod distinct;
mod representation;
mod tree;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bm25::{doc_length, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use distinct::{distinctive_ngrams, DEFAULT_MIN_SUPPORT};
pub use representation::{
    build_query_representation, feature_name, CountTransform, FeatureVocabulary, QueryVector,
    RepresentationConfig, DEFAULT_TOP_K_DOCS,
};
pub use tree::{
    argmax, fit_hierarchy, fit_subtree, path_string, ClusterAssignment, ClusterFit, ClusterNode,
    ClusterParams, ClusterTree, DEFAULT_BRANCH, DEFAULT_DEPTH, DEFAULT_MIN_LEAF,
};

use crate::corpus::{Dataset, QueryRecord};
use crate::error::{Error, Result};

pub const TREE_FORMAT: &str = "qdrank-cluster-tree";
pub const TREE_VERSION: u32 = 1;

/// Everything needed to map a raw query to its cluster paths: the baseline
/// ranker, the aggregation settings, the frozen feature vocabulary and the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryClusterer {
    pub format: String,
    pub version: u32,
    pub bm25: Bm25Index,
    pub representation: RepresentationConfig,
    pub vocabulary: FeatureVocabulary,
    pub tree: ClusterTree,
    /// Description of the run that produced the tree.
    #[serde(default)]
    pub manifest: serde_json::Value,
}

/// Result of fitting on a training split.
#[derive(Debug, Clone)]
pub struct FittedClusterer {
    pub clusterer: QueryClusterer,
    /// Named token counts per training query.
    pub representations: Vec<BTreeMap<String, u32>>,
    pub assignments: Vec<ClusterAssignment>,
}

impl QueryClusterer {
    pub fn fit(train: &Dataset, representation: RepresentationConfig, params: &ClusterParams) -> Result<FittedClusterer> {
        if train.is_empty() {
            return Err(Error::Data("cannot cluster an empty training split".into()));
        }
        let bm25 = Bm25Index::fit(train, &representation.recency_field);
        let representations: Vec<BTreeMap<String, u32>> = train
            .records
            .iter()
            .map(|q| build_query_representation(q, &bm25.rank(q), &representation))
            .collect();
        let vocabulary = FeatureVocabulary::fit(&representations);
        let vectors: Vec<QueryVector> = representations.iter().map(|r| vocabulary.vectorize(r)).collect();
        let fit = fit_hierarchy(&vectors, vocabulary.len(), params)?;
        Ok(FittedClusterer {
            clusterer: QueryClusterer {
                format: TREE_FORMAT.into(),
                version: TREE_VERSION,
                bm25,
                representation,
                vocabulary,
                tree: fit.tree,
                manifest: serde_json::Value::Null,
            },
            representations,
            assignments: fit.assignments,
        })
    }

    pub fn representation_of(&self, query: &QueryRecord) -> BTreeMap<String, u32> {
        build_query_representation(query, &self.bm25.rank(query), &self.representation)
    }

    pub fn vector_of(&self, query: &QueryRecord) -> QueryVector {
        self.vocabulary.vectorize(&self.representation_of(query))
    }

    pub fn assign(&self, query: &QueryRecord) -> Result<ClusterAssignment> {
        self.tree.assign(&self.vector_of(query))
    }

    pub fn assign_all(&self, records: &[QueryRecord]) -> Result<Vec<ClusterAssignment>> {
        records.iter().map(|q| self.assign(q)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut c: QueryClusterer = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if c.format != TREE_FORMAT || c.version != TREE_VERSION {
            return Err(Error::Compatibility(format!(
                "{} is not a v{TREE_VERSION} cluster tree",
                path.display()
            )));
        }
        c.vocabulary.reindex();
        Ok(c)
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(truth: &[usize], predicted: &[usize]) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    let n = truth.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        *table.entry((t, p)).or_default() += 1.0;
        *rows.entry(t).or_default() += 1.0;
        *cols.entry(p).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_rows * sum_cols / choose2(n);
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    #[test]
    fn ari_of_identical_partitions_is_one() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
    }

    #[test]
    fn ari_hand_example() {
        // Contingency [[2,1],[0,2]]: pair index 2, row/col pair sums 4 and 4, C(5,2)=10.
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1], &[0, 0, 1, 1, 1]);
        let expected = (2.0 - 4.0 * 4.0 / 10.0) / (4.0 - 1.6);
        assert!((ari - expected).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip_and_assignment() {
        let corpus = generate_synthetic(&SynthConfig {
            train_queries: 400,
            dev_queries: 20,
            test_queries: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let params = ClusterParams {
            depth: 2,
            branch: 4,
            min_leaf: 10,
            ..ClusterParams::default()
        };
        let fitted = QueryClusterer::fit(&corpus.train, RepresentationConfig::default(), &params).unwrap();
        let dir = std::env::temp_dir().join(format!("qdrank-tree-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tree.json");
        fitted.clusterer.save(&path).unwrap();
        let back = QueryClusterer::load(&path).unwrap();
        assert_eq!(back, fitted.clusterer);
        for (q, a) in corpus.train.records.iter().zip(&fitted.assignments) {
            assert_eq!(&back.assign(q).unwrap(), a);
        }
        std::fs::remove_dir_all(dir).ok();
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::encode::{EncodedQuery, FeatureEncoder};
use super::model::RankModel;
use super::score::score_documents;
use super::train::{clicked_ranks, train_model, TrainingLog};
use super::vocab::ClusterVocabulary;
use crate::cluster::{ClusterAssignment, QueryClusterer};
use crate::corpus::{Dataset, QueryRecord};
use crate::error::{Error, Result};
use crate::eval::{manifest_line, MetricsReport, DEFAULT_SUCCESS_KS};

pub const MODEL_FORMAT: &str = "qdrank-model";
pub const MODEL_VERSION: u32 = 1;
pub const SCORES_HEADER: &str = "query_id\tdoc_id\tscore";

/// A trained model together with the feature maps it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranker {
    pub format: String,
    pub version: u32,
    pub encoder: FeatureEncoder,
    pub model: RankModel,
    pub training: TrainingLog,
    /// Free-form run description stored alongside the parameters.
    #[serde(default)]
    pub manifest: serde_json::Value,
}

fn assignments_for(clusterer: Option<&QueryClusterer>, records: &[QueryRecord]) -> Result<Option<Vec<ClusterAssignment>>> {
    clusterer.map(|c| c.assign_all(records)).transpose()
}

impl Ranker {
    /// Trains `config.variant` on `train`, selecting parameters on `dev`.
    /// QC variants need the clusterer fitted on the same training split.
    pub fn fit(config: &ModelConfig, train: &Dataset, dev: &Dataset, clusterer: Option<&QueryClusterer>) -> Result<Self> {
        config.validate()?;
        if config.variant.needs_clusters() && clusterer.is_none() {
            return Err(Error::Config(format!("{} needs a cluster tree", config.variant)));
        }
        let clusterer = clusterer.filter(|_| config.variant.needs_clusters());
        let train_asg = assignments_for(clusterer, &train.records)?;
        let dev_asg = assignments_for(clusterer, &dev.records)?;
        Self::fit_with_assignments(config, train, train_asg.as_deref(), dev, dev_asg.as_deref(), clusterer)
    }

    pub fn fit_with_assignments(
        config: &ModelConfig,
        train: &Dataset,
        train_assignments: Option<&[ClusterAssignment]>,
        dev: &Dataset,
        dev_assignments: Option<&[ClusterAssignment]>,
        clusterer: Option<&QueryClusterer>,
    ) -> Result<Self> {
        if dev.schema != train.schema {
            return Err(Error::Compatibility("dev and train splits have different schemas".into()));
        }
        let clusters = match (clusterer, train_assignments) {
            (Some(c), Some(a)) => Some((&c.tree, a)),
            _ => None,
        };
        let encoder = FeatureEncoder::fit(train, clusters, config)?;
        let train_q = encoder.encode_all(&train.records, train_assignments)?;
        let dev_q = encoder.encode_all(&dev.records, dev_assignments)?;
        let model = RankModel::new(config.clone(), encoder.layout(config.embedding_dim))?;
        let (model, training) = train_model(model, &train_q, &dev_q)?;
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            encoder,
            model,
            training,
            manifest: serde_json::Value::Null,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    /// Checks that `dataset` and `clusterer` match what the model was trained on.
    pub fn check_compatible(&self, dataset: &Dataset, clusterer: Option<&QueryClusterer>) -> Result<()> {
        if dataset.schema != self.encoder.schema {
            return Err(Error::Compatibility(format!(
                "dataset schema {:?} differs from the checkpoint schema {:?}",
                dataset.schema, self.encoder.schema
            )));
        }
        if let Some(expected) = &self.encoder.clusters {
            let Some(c) = clusterer else {
                return Err(Error::Config(format!("{} needs its cluster tree", self.encoder.variant)));
            };
            if &ClusterVocabulary::from_tree(&c.tree)? != expected {
                return Err(Error::Compatibility(
                    "the cluster tree does not match the one the model was trained with".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn encode(&self, dataset: &Dataset, clusterer: Option<&QueryClusterer>) -> Result<Vec<EncodedQuery>> {
        self.check_compatible(dataset, clusterer)?;
        let clusterer = clusterer.filter(|_| self.encoder.variant.needs_clusters());
        let asg = assignments_for(clusterer, &dataset.records)?;
        self.encoder.encode_all(&dataset.records, asg.as_deref())
    }

    pub fn score(&self, query: &QueryRecord, assignment: Option<&ClusterAssignment>) -> Result<Vec<f64>> {
        score_documents(&self.model, &self.encoder.encode(query, assignment)?)
    }

    pub fn evaluate(&self, dataset: &Dataset, clusterer: Option<&QueryClusterer>) -> Result<MetricsReport> {
        self.evaluate_with_ks(dataset, clusterer, &DEFAULT_SUCCESS_KS)
    }

    pub fn evaluate_with_ks(&self, dataset: &Dataset, clusterer: Option<&QueryClusterer>, ks: &[usize]) -> Result<MetricsReport> {
        let queries = self.encode(dataset, clusterer)?;
        let ranks = clicked_ranks(&self.model, &queries)?;
        MetricsReport::from_ranks(
            queries.iter().map(|q| q.query_id.clone()).collect(),
            ranks,
            queries.iter().map(|q| q.weight).collect(),
            ks,
        )
    }

    /// Writes `query_id<TAB>doc_id<TAB>score`, one line per candidate.
    pub fn export_scores(&self, dataset: &Dataset, clusterer: Option<&QueryClusterer>, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let queries = self.encode(dataset, clusterer)?;
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut body = manifest_line(Some(&self.manifest));
        body.push_str(SCORES_HEADER);
        body.push('\n');
        for q in &queries {
            for (doc, s) in q.doc_ids.iter().zip(score_documents(&self.model, q)?) {
                body.push_str(&format!("{}\t{doc}\t{s}\n", q.query_id));
            }
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r: Ranker = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if r.format != MODEL_FORMAT || r.version != MODEL_VERSION {
            return Err(Error::Compatibility(format!(
                "{} is not a v{MODEL_VERSION} model checkpoint",
                path.display()
            )));
        }
        r.encoder.reindex();
        Ok(r)
    }
}

/// Reads a score export back as `(query_id, doc_id, score)` rows.
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<(String, String, f64)>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !header_seen && line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line != SCORES_HEADER {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "missing score header".into(),
                });
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let score = match cols.as_slice() {
            [_, _, s] => s.parse::<f64>().ok(),
            _ => None,
        };
        let Some(score) = score else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected query_id, doc_id and a numeric score".into(),
            });
        };
        out.push((cols[0].to_string(), cols[1].to_string(), score));
    }
    Ok(out)
}

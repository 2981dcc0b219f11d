//! Run configuration: a TOML file whose sections mirror the library's
//! parameter structs. Every section and key is optional.
//!
//! ```toml
//! seed = 7                      # overrides every component seed when set
//!
//! [synth]                       # generate
//! train_queries = 50000
//! vocab_size = 1000
//!
//! [cluster]                     # cluster, and sweeps over cluster settings
//! depth = 3
//! branch = 7
//! min_leaf = 50
//! top_k_docs = 4
//! count_transform = "raw"       # raw | log1p
//! fields = ["ngram", "category", "structure"]
//!
//! [model]                       # train
//! variant = "QC-MTLRM"          # DPRM | QC-DPRM | QC-WDPRM | QC-MTLRM
//! embedding_dim = 40
//! hidden_sizes = [256, 128, 64]
//! mix_rate = 0.9
//!
//! [eval]
//! success_ks = [1, 5]
//!
//! [sweep]
//! kind = "mix-rate"             # mix-rate | clusters
//! mix_rates = [0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.4, 3.0]
//! seeds = [0]
//! split = "test"
//! ```

use std::path::Path;

use qdrank::cluster::{ClusterParams, CountTransform, RepresentationConfig, DEFAULT_TOP_K_DOCS};
use qdrank::corpus::{SplitTag, SynthConfig};
use qdrank::linalg::{SvdParams, VarimaxParams};
use qdrank::rank::ModelConfig;
use qdrank::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub depth: usize,
    pub branch: usize,
    pub min_leaf: usize,
    pub top_k_docs: usize,
    pub count_transform: CountTransform,
    pub fields: Vec<String>,
    pub oversample: usize,
    pub power_iters: usize,
    pub varimax_max_iters: usize,
    pub varimax_tol: f64,
    pub seed: u64,
    /// Distinctive n-grams listed per cluster in the report.
    pub report_top_n: usize,
    pub report_min_support: u64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let p = ClusterParams::default();
        let r = RepresentationConfig::default();
        Self {
            depth: p.depth,
            branch: p.branch,
            min_leaf: p.min_leaf,
            top_k_docs: DEFAULT_TOP_K_DOCS,
            count_transform: p.transform,
            fields: r.fields,
            oversample: p.svd.oversample,
            power_iters: p.svd.power_iters,
            varimax_max_iters: p.varimax.max_iters,
            varimax_tol: p.varimax.tol,
            seed: p.seed,
            report_top_n: 10,
            report_min_support: qdrank::cluster::DEFAULT_MIN_SUPPORT,
        }
    }
}

impl ClusterSection {
    pub fn params(&self) -> ClusterParams {
        ClusterParams {
            depth: self.depth,
            branch: self.branch,
            min_leaf: self.min_leaf,
            svd: SvdParams {
                oversample: self.oversample,
                power_iters: self.power_iters,
            },
            varimax: VarimaxParams {
                max_iters: self.varimax_max_iters,
                tol: self.varimax_tol,
            },
            transform: self.count_transform,
            seed: self.seed,
        }
    }

    pub fn representation(&self) -> RepresentationConfig {
        RepresentationConfig {
            fields: self.fields.clone(),
            top_k: self.top_k_docs,
            ..RepresentationConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub success_ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            success_ks: qdrank::eval::DEFAULT_SUCCESS_KS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    #[default]
    MixRate,
    Clusters,
}

impl std::str::FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mix-rate" | "mix_rate" => Ok(SweepKind::MixRate),
            "clusters" => Ok(SweepKind::Clusters),
            _ => Err(format!("unknown sweep kind `{s}` (mix-rate|clusters)")),
        }
    }
}

/// One clustering setting of a cluster-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterGridPoint {
    pub depth: usize,
    pub branch: usize,
    pub min_leaf: usize,
}

pub const DEFAULT_MIX_RATES: [f64; 9] = [0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.4, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub mix_rates: Vec<f64>,
    pub cluster_grid: Vec<ClusterGridPoint>,
    /// Model seeds; every row is trained once per seed and averaged.
    pub seeds: Vec<u64>,
    pub split: SplitTag,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: SweepKind::MixRate,
            mix_rates: DEFAULT_MIX_RATES.to_vec(),
            cluster_grid: [(1, 2, 50), (1, 4, 50), (1, 7, 50), (2, 7, 50), (3, 7, 50)]
                .into_iter()
                .map(|(depth, branch, min_leaf)| ClusterGridPoint { depth, branch, min_leaf })
                .collect(),
            seeds: vec![0],
            split: SplitTag::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the generator, clustering and model seeds.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub cluster: ClusterSection,
    pub model: ModelConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Pushes the global seed, if any, into every component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(s) = self.seed {
            c.synth.seed = s;
            c.cluster.seed = s;
            c.model.seed = s;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cluster.params().validate()?;
        if self.eval.success_ks.contains(&0) {
            return Err(Error::Config("success@k needs k >= 1".into()));
        }
        if self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        Ok(())
    }
}

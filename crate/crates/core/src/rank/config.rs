use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "DPRM")]
    Dprm,
    /// Cluster paths as an extra sparse query field.
    #[serde(rename = "QC-DPRM")]
    QcDprm,
    /// Wide linear part over (cluster path x categorical token) crosses.
    #[serde(rename = "QC-WDPRM")]
    QcWdprm,
    /// Cluster prediction as an auxiliary task on the shared layers.
    #[serde(rename = "QC-MTLRM")]
    QcMtlrm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dprm, Variant::QcDprm, Variant::QcWdprm, Variant::QcMtlrm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dprm => "DPRM",
            Variant::QcDprm => "QC-DPRM",
            Variant::QcWdprm => "QC-WDPRM",
            Variant::QcMtlrm => "QC-MTLRM",
        }
    }

    pub fn needs_clusters(self) -> bool {
        self != Variant::Dprm
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| format!("unknown model variant `{s}` (DPRM|QC-DPRM|QC-WDPRM|QC-MTLRM)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adagrad,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(format!("unknown optimizer `{s}` (adagrad|adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embedding_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Weight of the cluster loss (QC-MTLRM).
    pub mix_rate: f64,
    /// Tokens seen fewer times than this in training map to UNK.
    pub vocab_min_freq: u64,
    pub cluster_head_hidden: usize,
    /// Query fields crossed with cluster paths in the wide part (QC-WDPRM).
    pub wide_fields: Vec<String>,
    pub wide_l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev MRR improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Dprm,
            embedding_dim: 40,
            hidden_sizes: vec![256, 128, 64],
            dropout_rate: 0.2,
            learning_rate: 0.1,
            optimizer: OptimizerKind::Adagrad,
            mix_rate: 0.9,
            vocab_min_freq: 2,
            cluster_head_hidden: 64,
            wide_fields: vec!["language".into(), "category".into()],
            wide_l2: 1e-6,
            batch_size: 256,
            max_epochs: 20,
            patience: 3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad(format!("hidden_sizes must be nonempty and positive, got {:?}", self.hidden_sizes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.mix_rate >= 0.0 && self.mix_rate.is_finite()) {
            return bad(format!("mix_rate must be non-negative, got {}", self.mix_rate));
        }
        if !(self.wide_l2 >= 0.0 && self.wide_l2.is_finite()) {
            return bad(format!("wide_l2 must be non-negative, got {}", self.wide_l2));
        }
        if self.cluster_head_hidden == 0 {
            return bad("cluster_head_hidden must be positive".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        Ok(())
    }
}

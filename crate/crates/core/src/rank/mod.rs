//! Pairwise neural ranking models, their training loop and document scoring.

mod config;
mod encode;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
mod ranker;
mod score;
mod train;
mod vocab;

pub use config::{ModelConfig, OptimizerKind, Variant};
pub use encode::{EncodedQuery, EncodedRecord, FeatureEncoder, Layout, CLUSTER_FIELD};
pub use gradcheck::{check_gradients, GroupCheck};
pub use loss::{loss_cluster, loss_joint, loss_joint_regularized, loss_rank, loss_rank_grad, PROB_CLAMP};
pub use model::{ForwardCache, PairExample, RankModel};
pub use optim::{Optimizer, ADAGRAD_INITIAL_ACCUMULATOR};
pub use params::{Linear, ModelParameters, EMBEDDING_INIT_RANGE};
pub use ranker::{read_scores, Ranker, MODEL_FORMAT, MODEL_VERSION, SCORES_HEADER};
pub use score::score_documents;
pub use train::{clicked_ranks, train_model, EpochLog, TrainingLog};
pub use vocab::{
    build_vocab, wide_cross_features, ClusterVocabulary, Lexicon, TokenVocab, WideVocabulary, UNK_ID, UNK_TOKEN,
};

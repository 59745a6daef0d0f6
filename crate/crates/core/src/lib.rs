//! Multimodal video popularity prediction.
//!
//! The crate covers the whole modelling path for short-video popularity:
//!
//! * [`dataset`]: post/user tables, frame-embedding matrices (CSV and the
//!   `EMB1` binary format) and the `log2(views / days) + 1` label.
//! * [`preprocess`]: log transforms, IQR bounds, label outlier removal,
//!   winsorizing and z-scoring fitted on training rows only.
//! * [`visual`]: frame average pooling followed by a PCA projection.
//! * [`features`]: user, temporal, text, tag-popularity and metadata
//!   features fused into one vector with a named schema.
//! * [`gbdt`]: gradient-boosted regression trees under Huber loss with
//!   ordered target statistics for categorical columns.
//! * [`ensemble`]: k-fold training, fold-averaged prediction, MAPE,
//!   ablations and distribution summaries.
//! * [`synth`]: a seeded generator with planted, group-attributable signal.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod visual;

pub use dataset::{
    compute_label, join, load_embeddings, load_posts, load_users, Dataset, EmbeddingKind, EmbeddingMatrix,
    LabeledExample, PostRecord, UserProfile,
};
pub use ensemble::{
    ablation_run, distribution_summary, kfold_split, mape, predict_ensemble, train_cv, EnsembleModel, FoldAssignment,
    MetricsReport,
};
pub use error::{Error, Result};
pub use features::{FeatureGroup, FeatureSchema, FeatureValue, FusedVector};
pub use gbdt::{GbdtConfig, GbdtModel, HuberParams};
pub use pipeline::PipelineConfig;
pub use synth::SynthConfig;
pub use visual::PcaModel;

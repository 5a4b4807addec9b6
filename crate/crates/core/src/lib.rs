//! Imbalanced multi-label text classification toolkit.
//!
//! The pipeline runs: [`corpus`] ingestion and normalization, train/validation
//! splitting in [`splitter`], class- or label-weighted training of a hashed
//! linear model in [`model`] (weights from [`weighting`]), per-label threshold
//! tuning in [`calibration`], and F1 scoring in [`metrics`]. [`synth`] generates
//! seeded corpora with a chosen imbalance profile for testing.

pub mod calibration;
pub mod corpus;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod splitter;
pub mod synth;
pub mod weighting;

pub use calibration::{
    apply_thresholds, coarse_search, oracle_best_thresholds, refine_per_label, tune, tune_with,
    GridSpec, ProbabilityMatrix, Provenance, RefineMode, ThresholdVector, TuneOptions, TuneOutcome,
};
pub use corpus::{
    load_dataset, preprocess, summarize, truncate, CorpusStats, Dataset, Instance, LabelSchema,
    PreprocessConfig, Preprocessor,
};
pub use error::{Error, Result};
pub use features::{featurize, FeaturizerConfig, SparseVector, TfMode};
pub use metrics::{
    confusion, evaluate, macro_f1, micro_f1, BinaryMode, ConfusionCounts, MetricsReport,
};
pub use model::{
    loss_and_grad, predict_proba, train, LinearModel, LossWeights, TrainConfig, TrainReport,
    WeightingMode,
};
pub use splitter::{
    balanced_merge, iterative_stratified_split, stratified_split, SplitConfig, SplitResult,
};
pub use synth::{generate_synthetic, SyntheticSpec};
pub use weighting::{class_weights, pos_weights, ClassWeights, PosWeights};

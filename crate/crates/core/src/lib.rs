//! Evaluation harness for profile-injection ("shilling") attacks on
//! collaborative filtering recommenders.
//!
//! The crate is organized around a pipeline: load an interaction dataset,
//! synthesize fake user profiles with one of the attack generators, inject
//! them into the training split, train victim models on the clean and the
//! poisoned data, and compare the two with rating-error, top-K ranking and
//! robustness metrics. A PCA-based detector can be placed between injection
//! and retraining to measure how much of the damage a defense recovers.
//!
//! Every stage is seeded and single-threaded-deterministic: the same config
//! and seed produce byte-identical reports.

pub mod attack;
pub mod dataset;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod recommender;
pub mod rng;
pub mod synth;

mod linalg;

pub use attack::{inject, AttackIntent, AttackParams, FakeProfile, FakeProfileSet, OutputKind};
pub use defense::{filter_users, pca_varselect, SuspectReport};
pub use dataset::{
    DatasetStats, FeedbackKind, InteractionDataset, Origin, RatingScale, SplitSpec,
};
pub use error::{Error, Result};
pub use experiment::{
    load_config, run_attack_eval, run_robustness_eval, ExperimentConfig, RunArtifacts,
};
pub use metrics::{EvalReport, TopKGroundTruth};
pub use recommender::{EmbeddingModel, ItemKnnModel, RankedList, Scorer, TrainConfig};

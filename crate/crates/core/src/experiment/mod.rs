//! Experiment configuration and run orchestration.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{expand_grid, load_config, ExperimentConfig};
pub use pipeline::{attack_only, run_attack_eval, run_robustness_eval, RunArtifacts, StageFailure};
pub use report::write_run_files;

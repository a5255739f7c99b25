//! Std companion of `rescast-core`: CSV formats, the binary model artifact,
//! training orchestration, evaluation reports, the HTTP prediction service
//! and the `rescast` command line.

pub mod artifact;
pub mod cli;
pub mod csvio;
pub mod pipeline;
pub mod report;
pub mod service;

pub use artifact::{load_artifact, load_model_set, save_artifact, ArtifactError, ModelArtifact};
pub use pipeline::{train_pipeline, PipelineConfig, TrainedPipeline};
pub use report::{evaluate_models, EvaluationReport};
pub use service::{AppState, FeedbackLog, RunningServer};

//! Core pipeline for benchmarking perceived-message-effectiveness (PME)
//! prediction: cohort handling, leakage-safe splits, supervised baselines,
//! prompt strategies, an LLM gateway with deterministic test doubles, the
//! evaluation metric suite and the experiment orchestrator.

pub mod baselines;
pub mod cohort;
pub mod experiments;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod seeding;

pub use cohort::{Cohort, SplitManifest, ValidationReport};
pub use experiments::{RunConfig, RunOutput};
pub use gateway::{Backend, BackendSpec, PredictionRecord};
pub use metrics::{MetricReport, PairSet};
pub use model::{
    Direction, FeatureId, LikertLabel, MessageItem, ParticipantProfile, RatingDomain,
    RatingRecord, ScaleKind, TherapyType,
};
pub use prompting::{PromptBundle, Strategy};

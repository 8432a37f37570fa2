//! Multimodal misinformation detection: visual veracity, image-headline
//! alignment, retrieval-backed claim checking, and a rule-guided judge,
//! plus the evaluation harness around them.

pub mod backend;
pub mod claims;
pub mod clock;
pub mod eval;
pub mod image_input;
pub mod judge;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod relevancy;
pub mod visual;

pub use model::*;
pub use pipeline::{Ablation, Pipeline, PipelineConfig, SampleReport};

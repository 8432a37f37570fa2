//! Access to vision-capable chat-completion models.
//!
//! [`ChatBackend`] is the transport seam: [`OpenAiBackend`] talks to an
//! OpenAI-compatible HTTP endpoint and [`MockBackend`] replays fixtures.
//! [`Gateway`] sits on top and adds strict-JSON parsing with one repair
//! attempt, per-stage call counting and token accounting.

mod cost;
mod gateway;
mod json;
mod mock;
mod openai;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cost::{estimate_cost, PriceTable};
pub use gateway::{Gateway, StageFailure, TokenUsage, UsageCounter, DEFAULT_MAX_TOKENS, REPAIR_REMINDER};
pub use json::{extract_json, extract_strict_json, ExtractError, StageOutput};
pub use mock::{MockBackend, MockFixture};
pub use openai::{OpenAiBackend, OpenAiConfig};

/// Which pipeline call a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Visual,
    Relevancy,
    Questions,
    Answer,
    Stance,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Visual,
        Stage::Relevancy,
        Stage::Questions,
        Stage::Answer,
        Stage::Stance,
        Stage::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Visual => "visual",
            Stage::Relevancy => "relevancy",
            Stage::Questions => "questions",
            Stage::Answer => "answer",
            Stage::Stance => "stance",
            Stage::Judge => "judge",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub stage: Stage,
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    /// Base64-encoded JPEG payloads.
    pub images: Vec<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl PromptRequest {
    /// Hex SHA-256 over the user prompt followed by each image payload
    /// (NUL-separated). With no images this is the plain prompt hash.
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.user_prompt, &self.images)
    }
}

pub fn prompt_hash(user_prompt: &str, images: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(user_prompt.as_bytes());
    for image in images {
        hasher.update([0u8]);
        hasher.update(image.as_bytes());
    }
    hex_lower(&hasher.finalize())
}

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub raw_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("no mock fixture for stage {stage} with prompt hash {hash}")]
    MockMiss { stage: Stage, hash: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

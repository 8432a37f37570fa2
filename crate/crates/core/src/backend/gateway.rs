use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::json::{extract_strict_json, ExtractError, StageOutput};
use super::{BackendError, BackendResponse, ChatBackend, PromptRequest, Stage};

/// Appended to the user prompt for the single repair attempt.
pub const REPAIR_REMINDER: &str = "\n\nOutput valid JSON only.";

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

/// Lock-free usage accumulator.
#[derive(Debug, Default)]
pub struct UsageCounter {
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl UsageCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, response: &BackendResponse) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_tokens.fetch_add(response.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(response.completion_tokens, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TokenUsage {
        TokenUsage {
            calls: self.calls.load(Ordering::Relaxed),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

/// Why a structured stage call produced no usable value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0} (after repair attempt)")]
    Output(ExtractError),
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    model_id: String,
    max_tokens: u32,
    totals: UsageCounter,
    // attempted backend calls per stage, including failed ones
    calls: [AtomicU64; Stage::ALL.len()],
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, model_id: impl Into<String>) -> Self {
        Gateway {
            backend,
            model_id: model_id.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            totals: UsageCounter::new(),
            calls: Default::default(),
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn request(&self, stage: Stage, system_prompt: &str, user_prompt: &str, images: &[String]) -> PromptRequest {
        PromptRequest {
            stage,
            model_id: self.model_id.clone(),
            system_prompt: system_prompt.to_owned(),
            user_prompt: user_prompt.to_owned(),
            images: images.to_vec(),
            temperature: 0.0,
            max_tokens: self.max_tokens,
        }
    }

    /// One raw backend call, accounted against both `meter` and the totals.
    pub fn complete(&self, request: &PromptRequest, meter: &UsageCounter) -> Result<BackendResponse, BackendError> {
        self.calls[request.stage.index()].fetch_add(1, Ordering::Relaxed);
        let response = self.backend.complete(request)?;
        meter.record(&response);
        self.totals.record(&response);
        Ok(response)
    }

    /// Calls the model and parses a `T`. A parse or schema failure is
    /// retried once with [`REPAIR_REMINDER`] appended to the user prompt.
    pub fn call_structured<T: StageOutput>(
        &self,
        stage: Stage,
        system_prompt: &str,
        user_prompt: &str,
        images: &[String],
        meter: &UsageCounter,
    ) -> Result<T, StageFailure> {
        let mut request = self.request(stage, system_prompt, user_prompt, images);
        let first = self.complete(&request, meter)?;
        match extract_strict_json::<T>(&first.raw_text) {
            Ok(v) => return Ok(v),
            Err(e) => debug!("{stage}: unusable output ({e}), retrying with reminder"),
        }
        request.user_prompt.push_str(REPAIR_REMINDER);
        let second = self.complete(&request, meter)?;
        extract_strict_json::<T>(&second.raw_text).map_err(|e| {
            warn!("{stage}: output still unusable after repair: {e}");
            StageFailure::Output(e)
        })
    }

    pub fn usage(&self) -> TokenUsage {
        self.totals.snapshot()
    }

    pub fn calls_for(&self, stage: Stage) -> u64 {
        self.calls[stage.index()].load(Ordering::Relaxed)
    }
}

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{prompt_hash, BackendError, BackendResponse, ChatBackend, PromptRequest, Stage};

/// Matches any prompt for the stage when no exact fixture exists.
pub const ANY_PROMPT: &str = "*";

/// One fixture entry as stored on disk.
///
/// `response` may be a string (returned verbatim) or any JSON value
/// (returned in compact serialized form). Exactly one of `prompt_hash` or
/// `user_prompt` should be given; `"*"` or neither makes a stage default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixture {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
    pub response: Value,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Many(Vec<MockFixture>),
    One(MockFixture),
}

/// Replays canned responses keyed by (stage, prompt hash).
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<(Stage, String), String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, stage: Stage, hash: impl Into<String>, response: impl Into<String>) {
        self.fixtures.insert((stage, hash.into()), response.into());
    }

    pub fn insert_for_prompt(&mut self, stage: Stage, user_prompt: &str, response: &str) {
        self.insert(stage, prompt_hash(user_prompt, &[]), response);
    }

    pub fn insert_stage_default(&mut self, stage: Stage, response: impl Into<String>) {
        self.insert(stage, ANY_PROMPT, response);
    }

    pub fn add_fixture(&mut self, fixture: MockFixture) {
        let hash = match (fixture.prompt_hash, fixture.user_prompt) {
            (Some(h), _) => h,
            (None, Some(p)) => prompt_hash(&p, &fixture.images),
            (None, None) => ANY_PROMPT.to_owned(),
        };
        let response = match fixture.response {
            Value::String(s) => s,
            other => other.to_string(),
        };
        self.insert(fixture.stage, hash, response);
    }

    /// Loads every `*.json` file in `dir` (sorted by name; later files win).
    pub fn load_dir(dir: &Path) -> Result<Self, BackendError> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut mock = MockBackend::new();
        for path in paths {
            let text =
                fs::read_to_string(&path).map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
            let file: FixtureFile =
                serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
            match file {
                FixtureFile::Many(list) => list.into_iter().for_each(|f| mock.add_fixture(f)),
                FixtureFile::One(f) => mock.add_fixture(f),
            }
        }
        Ok(mock)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

// rough chars-per-token heuristic so mock runs exercise the cost path
fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

const IMAGE_TOKENS: u64 = 85;

impl ChatBackend for MockBackend {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError> {
        let hash = request.prompt_hash();
        let text = self
            .fixtures
            .get(&(request.stage, hash.clone()))
            .or_else(|| self.fixtures.get(&(request.stage, ANY_PROMPT.to_owned())))
            .ok_or(BackendError::MockMiss {
                stage: request.stage,
                hash,
            })?;
        Ok(BackendResponse {
            raw_text: text.clone(),
            prompt_tokens: approx_tokens(&request.system_prompt)
                + approx_tokens(&request.user_prompt)
                + IMAGE_TOKENS * request.images.len() as u64,
            completion_tokens: approx_tokens(text),
        })
    }
}

use std::sync::Arc;
use std::time::Duration;

use log::warn;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{BackendError, BackendResponse, ChatBackend, PromptRequest};
use crate::clock::{Backoff, Clock, SystemClock};

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    /// Base URL up to and including the version segment, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
    pub backoff: Backoff,
}

impl OpenAiConfig {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";

    pub fn new(api_key: impl Into<String>) -> Self {
        OpenAiConfig {
            base_url: Self::DEFAULT_BASE_URL.to_owned(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(120),
            backoff: Backoff::default(),
        }
    }
}

/// Blocking client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiBackend {
    http: reqwest::blocking::Client,
    endpoint: String,
    config: OpenAiConfig,
    clock: Arc<dyn Clock>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self, BackendError> {
        Self::with_clock(config, Arc::new(SystemClock::new()))
    }

    pub fn with_clock(config: OpenAiConfig, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        if config.api_key.trim().is_empty() {
            return Err(BackendError::Auth("no API credential configured".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Ok(OpenAiBackend {
            http,
            endpoint,
            config,
            clock,
        })
    }

    fn body(request: &PromptRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.user_prompt})];
        for image in &request.images {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/jpeg;base64,{image}")}
            }));
        }
        json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": content}
            ]
        })
    }

    fn attempt(&self, body: &Value) -> Result<BackendResponse, BackendError> {
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: CompletionBody = serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let raw_text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("response has no message content".into()))?;
        let usage = parsed.usage.unwrap_or(Usage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(BackendResponse {
            raw_text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        })
    }
}

fn is_transient(err: &BackendError) -> bool {
    match err {
        BackendError::Transport(_) => true,
        BackendError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError> {
        let body = Self::body(request);
        let result = self.config.backoff.run(self.clock.as_ref(), is_transient, |attempt| {
            if attempt > 0 {
                warn!("{}: retry {attempt} against {}", request.stage, self.endpoint);
            }
            self.attempt(&body)
        });
        match result {
            Err(e) if is_transient(&e) => Err(BackendError::Transport(format!(
                "giving up after {} retries: {e}",
                self.config.backoff.max_retries
            ))),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Stage;
    use crate::clock::ManualClock;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Serves the given canned (status, body) responses in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, Arc<std::sync::Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(std::sync::Mutex::new(Vec::new()));
        let (h, b) = (hits.clone(), bodies.clone());
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut req = vec![0u8; len];
                reader.read_exact(&mut req).unwrap();
                b.lock().unwrap().push(String::from_utf8(req).unwrap());
                h.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), hits, bodies)
    }

    fn backend(url: String, key: &str, clock: Arc<ManualClock>) -> OpenAiBackend {
        let mut cfg = OpenAiConfig::new(key);
        cfg.base_url = url;
        cfg.timeout = Duration::from_secs(5);
        OpenAiBackend::with_clock(cfg, clock).unwrap()
    }

    fn request() -> PromptRequest {
        PromptRequest {
            stage: Stage::Visual,
            model_id: "gpt-4o-mini".into(),
            system_prompt: "sys".into(),
            user_prompt: "user".into(),
            images: vec!["QUJD".into()],
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"{\"x\":1}"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

    #[test]
    fn parses_content_and_usage_and_sends_image_parts() {
        let (url, _, bodies) = serve(vec![(200, OK.into())]);
        let out = backend(url, "k", Arc::new(ManualClock::new()))
            .complete(&request())
            .unwrap();
        assert_eq!(out.raw_text, "{\"x\":1}");
        assert_eq!((out.prompt_tokens, out.completion_tokens), (12, 3));
        let sent: Value = serde_json::from_str(&bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(
            sent["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/jpeg;base64,QUJD"
        );
    }

    #[test]
    fn bad_credential_is_auth_error_without_retry() {
        let (url, hits, _) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let clock = Arc::new(ManualClock::new());
        let err = backend(url, "wrong", clock.clone()).complete(&request()).unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        assert_eq!(clock.total_slept(), Duration::ZERO);
    }

    #[test]
    fn server_errors_are_retried_with_backoff() {
        let (url, hits, _) = serve(vec![(500, "{}".into()), (503, "{}".into()), (200, OK.into())]);
        let clock = Arc::new(ManualClock::new());
        let out = backend(url, "k", clock.clone()).complete(&request()).unwrap();
        assert_eq!(out.completion_tokens, 3);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert_eq!(clock.total_slept(), Duration::from_secs(3));
    }

    #[test]
    fn exhausted_retries_become_transport_error() {
        let (url, hits, _) = serve(vec![(500, "{}".into()); 3]);
        let err = backend(url, "k", Arc::new(ManualClock::new()))
            .complete(&request())
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn missing_credential_rejected_up_front() {
        assert!(matches!(
            OpenAiBackend::new(OpenAiConfig::new("")),
            Err(BackendError::Auth(_))
        ));
    }
}

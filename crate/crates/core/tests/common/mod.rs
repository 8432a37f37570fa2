#![allow(dead_code)]

use std::collections::VecDeque;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use mirage::backend::{prompt_hash, BackendError, BackendResponse, ChatBackend, MockFixture, PromptRequest, Stage};
use mirage::claims::{FixtureProvider, RawHit, SearchError, SearchProvider};
use mirage::clock::{Clock, ManualClock};
use sha2::{Digest, Sha256};

type Responder = dyn Fn(&PromptRequest) -> String + Send + Sync;

/// Answers every request through a closure and keeps a log of requests.
pub struct ScriptedBackend {
    respond: Box<Responder>,
    log: Mutex<Vec<PromptRequest>>,
}

impl ScriptedBackend {
    pub fn new(respond: impl Fn(&PromptRequest) -> String + Send + Sync + 'static) -> Self {
        ScriptedBackend {
            respond: Box::new(respond),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn world() -> Self {
        Self::new(world_response)
    }

    pub fn requests(&self) -> Vec<PromptRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.log.lock().unwrap().iter().filter(|r| r.stage == stage).count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        let raw_text = (self.respond)(request);
        Ok(BackendResponse {
            prompt_tokens: request.user_prompt.len() as u64 / 4 + 10,
            completion_tokens: raw_text.len() as u64 / 4 + 1,
            raw_text,
        })
    }
}

/// Wraps a backend and remembers every exchange as a mock fixture.
pub struct RecordingBackend<B> {
    inner: B,
    fixtures: Mutex<Vec<MockFixture>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            fixtures: Mutex::new(Vec::new()),
        }
    }

    pub fn save(&self, dir: &Path) {
        fs::create_dir_all(dir).unwrap();
        let mut fixtures = self.fixtures.lock().unwrap().clone();
        fixtures.sort_by(|a, b| (a.stage.as_str(), &a.prompt_hash).cmp(&(b.stage.as_str(), &b.prompt_hash)));
        fs::write(
            dir.join("recorded.json"),
            serde_json::to_string_pretty(&fixtures).unwrap(),
        )
        .unwrap();
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &PromptRequest) -> Result<BackendResponse, BackendError> {
        let response = self.inner.complete(request)?;
        self.fixtures.lock().unwrap().push(MockFixture {
            stage: request.stage,
            prompt_hash: Some(request.prompt_hash()),
            user_prompt: None,
            images: Vec::new(),
            response: serde_json::Value::String(response.raw_text.clone()),
        });
        Ok(response)
    }
}

fn digest(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

pub fn line_after<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or("").trim()
}

fn unit(h: u64, shift: u32) -> f64 {
    ((h >> shift) % 101) as f64 / 100.0
}

/// A deterministic stand-in for the model, driven only by the prompt.
pub fn world_response(req: &PromptRequest) -> String {
    let h = digest(&[req.stage.as_str(), &req.user_prompt, &req.images.join(",")]);
    match req.stage {
        Stage::Visual => format!(
            r#"{{"ai_generated":{},"confidence":{},"explanation":"scripted","anomalies":[]}}"#,
            h.is_multiple_of(4),
            unit(h, 8)
        ),
        Stage::Relevancy => format!(
            r#"{{"aligned":"{}","confidence":{},"explanation":"scripted"}}"#,
            ["true", "partial", "false"][(h % 3) as usize],
            unit(h, 8)
        ),
        Stage::Questions => {
            let headline = line_after(&req.user_prompt, "Headline:");
            let tag = digest(&[headline]) % 10_000;
            let round = h % 1000;
            // first query is the same in every chain, so chains must dedup it
            format!(
                r#"["Did event {tag} happen?", "who was at event {tag} round {round}", "when was event {tag} round {round}"]"#
            )
        }
        Stage::Answer => {
            let url = line_after(&req.user_prompt, "URL:");
            let citations = if url.is_empty() {
                "[]".to_owned()
            } else {
                format!(r#"[{{"url":"{url}","title":"src"}}]"#)
            };
            format!(
                r#"{{"answer":"scripted answer {}","citations":{citations},"confidence":{},"rationale":"r"}}"#,
                h % 97,
                unit(h, 8)
            )
        }
        Stage::Stance => format!(
            r#"{{"stance":"{}","confidence":{}}}"#,
            ["Supports", "Contradicts", "Inconclusive"][(h % 3) as usize],
            unit(h, 8)
        ),
        Stage::Judge => format!(
            r#"{{"label":"{}","confidence":{},"rationale":"scripted","key_factors":["qa: scripted"]}}"#,
            if h % 10 < 7 {
                "Misinformation"
            } else {
                "Not Misinformation"
            },
            0.5 + unit(h, 8) / 2.0
        ),
    }
}

/// Deterministic hits for any query.
pub fn world_hits(query: &str, n: usize) -> Vec<RawHit> {
    let h = digest(&[query]) % 100_000;
    (0..n)
        .map(|i| RawHit {
            title: format!("Result {i} for {query}"),
            url: format!("https://news.example/{h}/{i}"),
            snippet: format!("snippet {h} {i}"),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum Step {
    Hits(usize),
    Fail,
    Slow(Duration, usize),
    Permanent,
}

/// Search provider that follows a script (then falls back to `Hits(default)`),
/// counting calls and noting the clock at each one.
pub struct StubProvider {
    pub live: bool,
    default_hits: usize,
    script: Mutex<VecDeque<Step>>,
    clock: Option<Arc<ManualClock>>,
    calls: AtomicU64,
    call_times: Mutex<Vec<Duration>>,
    queries: Mutex<Vec<String>>,
}

impl StubProvider {
    pub fn new(default_hits: usize) -> Self {
        StubProvider {
            live: false,
            default_hits,
            script: Mutex::new(VecDeque::new()),
            clock: None,
            calls: AtomicU64::new(0),
            call_times: Mutex::new(Vec::new()),
            queries: Mutex::new(Vec::new()),
        }
    }

    pub fn live(mut self, clock: Arc<ManualClock>) -> Self {
        self.live = true;
        self.clock = Some(clock);
        self
    }

    pub fn with_clock(mut self, clock: Arc<ManualClock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn script(self, steps: impl IntoIterator<Item = Step>) -> Self {
        self.script.lock().unwrap().extend(steps);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn call_times(&self) -> Vec<Duration> {
        self.call_times.lock().unwrap().clone()
    }

    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().unwrap().clone()
    }
}

impl SearchProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn is_live(&self) -> bool {
        self.live
    }

    fn fetch(&self, query: &str, max_results: usize, _timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.queries.lock().unwrap().push(query.to_owned());
        if let Some(c) = &self.clock {
            self.call_times.lock().unwrap().push(c.now());
        }
        let step = self
            .script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or(Step::Hits(self.default_hits));
        match step {
            Step::Hits(n) => Ok(world_hits(query, n)),
            Step::Fail => Err(SearchError::Transport("stub failure".into())),
            Step::Permanent => Err(SearchError::Permanent("stub refused".into())),
            Step::Slow(d, n) => {
                if let Some(c) = &self.clock {
                    c.advance(d);
                }
                let _ = max_results;
                Ok(world_hits(query, n))
            }
        }
    }
}

/// Records every fetched query into a fixture directory.
pub struct RecordingProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P> RecordingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        RecordingProvider { inner, dir: dir.into() }
    }
}

impl<P: SearchProvider> SearchProvider for RecordingProvider<P> {
    fn name(&self) -> &str {
        "recording"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn fetch(&self, query: &str, max_results: usize, timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        let hits = self.inner.fetch(query, max_results, timeout)?;
        FixtureProvider::record(&self.dir, query, &hits).unwrap();
        Ok(hits)
    }
}

/// Counts fetches while delegating to another provider.
pub struct CountingProvider<P> {
    pub inner: P,
    calls: AtomicU64,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: SearchProvider> SearchProvider for CountingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }

    fn fetch(&self, query: &str, max_results: usize, timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.fetch(query, max_results, timeout)
    }
}

pub fn png_bytes(seed: u8) -> Vec<u8> {
    let img = image::RgbImage::from_fn(8, 6, |x, y| {
        image::Rgb([seed.wrapping_mul(31), (x * 20) as u8, (y * 30) as u8])
    });
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .unwrap();
    out
}

/// Writes `n` samples (70% misinformation, rounded) with images into `dir`
/// and returns the dataset file.
pub fn write_dataset(dir: &Path, n: usize) -> PathBuf {
    fs::create_dir_all(dir.join("images")).unwrap();
    let fakes = (n as f64 * 0.7).round() as usize;
    let fake_cats = ["textual_veracity_distortion", "visual_veracity_distortion", "mismatch"];
    let records: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            let name = format!("images/{i:03}.png");
            fs::write(dir.join(&name), png_bytes(i as u8)).unwrap();
            let (label, cat) = if i < fakes {
                ("Fake", fake_cats[i % 3])
            } else {
                ("True", "original")
            };
            serde_json::json!({
                "id": format!("val-{i:03}"),
                "image": name,
                "headline": format!("Officials confirm event number {i} took place downtown"),
                "gold_label": label,
                "category": cat,
            })
        })
        .collect();
    let path = dir.join("dataset.json");
    fs::write(&path, serde_json::to_string_pretty(&records).unwrap()).unwrap();
    path
}

pub fn hash_of(user: &str) -> String {
    prompt_hash(user, &[])
}

/// Every regular file under `dir` as (name, bytes), sorted.
pub fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub fn manual_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new())
}

pub fn as_clock(c: &Arc<ManualClock>) -> Arc<dyn Clock> {
    c.clone()
}

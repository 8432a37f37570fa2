//! Per-sample orchestration: visual, alignment, claims, then the judge.

use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Gateway, PriceTable, TokenUsage, UsageCounter};
use crate::claims::{run_chains, RetrievalPolicy, SearchClient};
use crate::clock::{Clock, SystemClock};
use crate::image_input::encode_image;
use crate::judge::{derive_stance, judge, JudgeInput, JudgeKind, QaStance, SignalFlags};
use crate::model::{AlignmentVerdict, ClaimEvidence, JudgeVerdict, Sample, VisualVerdict};
use crate::relevancy::assess_encoded;
use crate::visual::verify_encoded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoVisual,
    NoRag,
    JudgeOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoVisual, Ablation::NoRag, Ablation::JudgeOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoVisual => "no-visual",
            Ablation::NoRag => "no-rag",
            Ablation::JudgeOnly => "judge-only",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Ablation::Full => "Full",
            Ablation::NoVisual => "No Visual Verification",
            Ablation::NoRag => "No Claim Verification",
            Ablation::JudgeOnly => "Judge Only",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation {s:?} (expected full, no-visual, no-rag or judge-only)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    pub model: String,
    pub base_url: String,
    pub max_tokens: u32,
    pub prices: PriceTable,
    /// Directory of mock fixtures; `None` means a live backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<PathBuf>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            model: "gpt-4o-mini".into(),
            base_url: crate::backend::OpenAiConfig::DEFAULT_BASE_URL.into(),
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            prices: PriceTable::GPT_4O_MINI,
            mock_fixtures: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    pub endpoint: String,
    /// Replay recorded results from this directory instead of searching live.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            endpoint: crate::claims::DuckDuckGoProvider::DEFAULT_ENDPOINT.into(),
            fixtures: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("no stage enabled; select the judge-only ablation explicitly")]
    NoStages,
    #[error("claims stage enabled but no search client supplied")]
    MissingSearch,
    #[error("invalid retrieval policy: {0}")]
    Retrieval(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub enable_visual: bool,
    pub enable_alignment: bool,
    pub enable_claims: bool,
    /// Must be set when all three stages are off.
    pub judge_only: bool,
    pub judge_kind: JudgeKind,
    /// Run the visual and alignment calls concurrently within a sample.
    pub parallel_vision: bool,
    pub retrieval: RetrievalPolicy,
    pub backend: BackendSettings,
    pub search: SearchSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::for_ablation(Ablation::Full)
    }
}

impl PipelineConfig {
    pub fn for_ablation(ablation: Ablation) -> Self {
        let mut config = PipelineConfig {
            enable_visual: true,
            enable_alignment: true,
            enable_claims: true,
            judge_only: false,
            judge_kind: JudgeKind::default(),
            parallel_vision: false,
            retrieval: RetrievalPolicy::default(),
            backend: BackendSettings::default(),
            search: SearchSettings::default(),
            output_dir: None,
        };
        config.apply_ablation(ablation);
        config
    }

    pub fn apply_ablation(&mut self, ablation: Ablation) {
        let (visual, claims) = match ablation {
            Ablation::Full => (true, true),
            Ablation::NoVisual => (false, true),
            Ablation::NoRag => (true, false),
            Ablation::JudgeOnly => (false, false),
        };
        self.enable_visual = visual;
        self.enable_claims = claims;
        self.enable_alignment = ablation != Ablation::JudgeOnly;
        self.judge_only = ablation == Ablation::JudgeOnly;
    }

    pub fn flags(&self) -> SignalFlags {
        SignalFlags {
            use_visual: self.enable_visual,
            use_alignment: self.enable_alignment,
            use_qa: self.enable_claims,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.enable_visual || self.enable_alignment || self.enable_claims || self.judge_only) {
            return Err(ConfigError::NoStages);
        }
        self.retrieval.validate().map_err(ConfigError::Retrieval)
    }
}

/// Wall-clock time per stage in milliseconds; absent for skipped stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims_ms: Option<u64>,
    pub judge_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    pub headline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<VisualVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims: Option<ClaimEvidence>,
    /// Present only when the rules judge consumed a derived stance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<QaStance>,
    pub judge: JudgeVerdict,
    pub timings: StageTimings,
    pub usage: TokenUsage,
    pub query_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleReport {
    fn failed(sample: &Sample, error: String) -> Self {
        SampleReport {
            sample_id: sample.id.clone(),
            headline: sample.headline.clone(),
            image: None,
            visual: None,
            alignment: None,
            claims: None,
            stance: None,
            judge: JudgeVerdict::uncertain(error.clone()),
            timings: StageTimings::default(),
            usage: TokenUsage::default(),
            query_count: 0,
            error: Some(error),
        }
    }
}

/// File name for a sample's report. Anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn report_file_name(sample_id: &str) -> String {
    let stem: String = sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{stem}.json")
}

pub fn write_report(dir: &Path, report: &SampleReport) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(report_file_name(&report.sample_id));
    let mut body = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    body.push('\n');
    fs::write(&path, body)?;
    Ok(path)
}

/// Reads every `*.json` report in `dir`, sorted by file name.
pub fn read_reports(dir: &Path) -> io::Result<Vec<SampleReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
        })
        .collect()
}

pub struct Pipeline {
    config: PipelineConfig,
    gateway: Arc<Gateway>,
    search: Option<Arc<SearchClient>>,
    timing: Arc<dyn Clock>,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        gateway: Arc<Gateway>,
        search: Option<Arc<SearchClient>>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        if config.enable_claims && search.is_none() {
            return Err(ConfigError::MissingSearch);
        }
        Ok(Pipeline {
            config,
            gateway,
            search,
            timing: Arc::new(SystemClock::new()),
        })
    }

    /// Clock used only for the report timings.
    pub fn with_timing_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.timing = clock;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn search(&self) -> Option<&Arc<SearchClient>> {
        self.search.as_ref()
    }

    fn timed<T>(&self, f: impl FnOnce() -> T) -> (T, u64) {
        let start = self.timing.now();
        let out = f();
        let elapsed = self.timing.now().saturating_sub(start);
        (out, millis(elapsed))
    }

    /// Runs every enabled stage for one sample and persists the report when
    /// an output directory is configured. Stage failures degrade to
    /// Uncertain fields; the sample is never aborted.
    pub fn process_sample(&self, sample: &Sample) -> SampleReport {
        let config = &self.config;
        let meter = UsageCounter::new();
        let mut timings = StageTimings::default();
        let mut error = None;
        let vision = config.enable_visual || config.enable_alignment;

        let (mut visual, mut alignment) = (None, None);
        if vision {
            match encode_image(&sample.image_ref) {
                Ok(image) => {
                    let run_visual = || {
                        config
                            .enable_visual
                            .then(|| self.timed(|| verify_encoded(&self.gateway, &image, &meter)))
                    };
                    let run_alignment = || {
                        config
                            .enable_alignment
                            .then(|| self.timed(|| assess_encoded(&self.gateway, &image, &sample.headline, &meter)))
                    };
                    let (v, a) = if config.parallel_vision {
                        rayon::join(run_visual, run_alignment)
                    } else {
                        (run_visual(), run_alignment())
                    };
                    if let Some((v, ms)) = v {
                        visual = Some(v);
                        timings.visual_ms = Some(ms);
                    }
                    if let Some((a, ms)) = a {
                        alignment = Some(a);
                        timings.alignment_ms = Some(ms);
                    }
                }
                Err(e) => {
                    warn!("sample {}: {e}", sample.id);
                    let reason = e.to_string();
                    if config.enable_visual {
                        visual = Some(VisualVerdict::uncertain(reason.clone()));
                        timings.visual_ms = Some(0);
                    }
                    if config.enable_alignment {
                        alignment = Some(AlignmentVerdict::uncertain(reason.clone()));
                        timings.alignment_ms = Some(0);
                    }
                    error = Some(reason);
                }
            }
        }

        let mut claims = None;
        if config.enable_claims {
            let search = self.search.as_ref().expect("checked in Pipeline::new");
            let (evidence, ms) =
                self.timed(|| run_chains(&self.gateway, search, &sample.headline, &config.retrieval, &meter));
            claims = Some(evidence);
            timings.claims_ms = Some(ms);
        }

        let best_qa = claims.as_ref().map(|c| c.best_per_chain.clone()).unwrap_or_default();
        let ((verdict, stance), ms) = self.timed(|| {
            let stance = (config.enable_claims && config.judge_kind == JudgeKind::Rules)
                .then(|| derive_stance(&self.gateway, &best_qa, &sample.headline, &meter));
            let input = JudgeInput {
                headline: sample.headline.clone(),
                image_path: vision.then(|| sample.image_ref.describe()),
                visual: visual.clone(),
                alignment: alignment.clone(),
                best_qa,
                stance,
                flags: config.flags(),
            };
            (judge(config.judge_kind, &self.gateway, &input, &meter), stance)
        });
        timings.judge_ms = ms;

        let report = SampleReport {
            sample_id: sample.id.clone(),
            headline: sample.headline.clone(),
            image: vision.then(|| sample.image_ref.describe()),
            query_count: claims.as_ref().map_or(0, |c| c.queries_issued.len()),
            visual,
            alignment,
            claims,
            stance,
            judge: verdict,
            timings,
            usage: meter.snapshot(),
            error,
        };
        self.persist(report)
    }

    fn persist(&self, mut report: SampleReport) -> SampleReport {
        if let Some(dir) = &self.config.output_dir {
            match write_report(dir, &report) {
                Ok(path) => info!("wrote {}", path.display()),
                Err(e) => {
                    warn!("could not write report for {}: {e}", report.sample_id);
                    report.error = Some(format!("report not written: {e}"));
                }
            }
        }
        report
    }

    /// Processes `samples` on up to `parallelism` threads. Output order
    /// matches input order; a panicking sample yields an Uncertain report.
    pub fn run_batch(&self, samples: &[Sample], parallelism: usize) -> Vec<SampleReport> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| {
            samples
                .par_iter()
                .map(|sample| {
                    panic::catch_unwind(AssertUnwindSafe(|| self.process_sample(sample))).unwrap_or_else(|cause| {
                        let msg = cause
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| cause.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "unknown panic".into());
                        warn!("sample {} failed: {msg}", sample.id);
                        self.persist(SampleReport::failed(sample, format!("sample failed: {msg}")))
                    })
                })
                .collect()
        })
    }
}

fn millis(d: Duration) -> u64 {
    u64::try_from(d.as_millis()).unwrap_or(u64::MAX)
}

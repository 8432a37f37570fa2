use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use log::warn;
use mirage::backend::{estimate_cost, ChatBackend, Gateway, MockBackend, OpenAiBackend, OpenAiConfig, TokenUsage};
use mirage::claims::{
    DuckDuckGoProvider, FixtureProvider, QueryCache, RawHit, SearchClient, SearchError, SearchProvider,
};
use mirage::clock::{Clock, FrozenClock, SystemClock};
use mirage::eval::{load_dataset, stratified_sample};
use mirage::pipeline::{Ablation, Pipeline, PipelineConfig};
use mirage::{Sample, VerdictLabel};
use serde::{Deserialize, Serialize};

use crate::config::{api_key, resolve, RunSettings, ENV_KEYS};
use crate::RunArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheCounts {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    pub mock: bool,
    pub dataset: PathBuf,
    pub sample_count: usize,
    pub sample_ids: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub usage: TokenUsage,
    /// Dollars, from the configured price table.
    pub cost: f64,
    pub cache: CacheCounts,
    pub search_dispatches: u64,
    pub n_uncertain: usize,
    pub n_errors: usize,
}

pub const MANIFEST: &str = "manifest.json";
pub const REPORTS_DIR: &str = "reports";

/// Provider for offline runs without recorded search results.
struct NoSearch;

impl SearchProvider for NoSearch {
    fn name(&self) -> &str {
        "offline"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn fetch(&self, _query: &str, _max: usize, _timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        Ok(Vec::new())
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn apply_flags(args: &RunArgs, config: &mut crate::config::FileConfig) -> Option<Ablation> {
    let ablation = args.ablation.map(Ablation::from);
    if let Some(a) = ablation {
        config.pipeline.apply_ablation(a);
    }
    if let Some(j) = args.judge {
        config.pipeline.judge_kind = j.into();
    }
    if let Some(m) = &args.model {
        config.pipeline.backend.model = m.clone();
    }
    if let Some(d) = &args.mock_fixtures {
        config.pipeline.backend.mock_fixtures = Some(d.clone());
    }
    if let Some(d) = &args.search_fixtures {
        config.pipeline.search.fixtures = Some(d.clone());
    }
    if let Some(c) = &args.cache {
        config.pipeline.search.cache = Some(c.clone());
    }
    if let Some(p) = args.parallelism {
        config.run.parallelism = p;
    }
    if let Some(f) = args.fraction {
        config.run.fraction = f;
    }
    if let Some(s) = args.seed {
        config.run.seed = s;
    }
    if !args.mock {
        config.pipeline.backend.mock_fixtures = None;
    }
    config.pipeline.output_dir = Some(args.out.join(REPORTS_DIR));
    ablation
}

fn build_backend(
    args: &RunArgs,
    config: &PipelineConfig,
    env: &HashMap<String, String>,
) -> Result<Arc<dyn ChatBackend>> {
    if args.mock {
        let Some(dir) = &config.backend.mock_fixtures else {
            bail!("--mock needs --mock-fixtures DIR (or backend.mock_fixtures in the config file)");
        };
        let mock =
            MockBackend::load_dir(dir).with_context(|| format!("loading mock fixtures from {}", dir.display()))?;
        if mock.is_empty() {
            warn!("no mock fixtures found in {}", dir.display());
        }
        return Ok(Arc::new(mock));
    }
    let Some(key) = api_key(env) else {
        bail!(
            "live mode needs an API credential; set {} (or pass --mock)",
            ENV_KEYS.join(" or ")
        );
    };
    let mut openai = OpenAiConfig::new(key);
    openai.base_url = config.backend.base_url.clone();
    Ok(Arc::new(OpenAiBackend::new(openai)?))
}

fn build_search(args: &RunArgs, config: &PipelineConfig) -> Result<(Arc<dyn SearchProvider>, Arc<QueryCache>)> {
    let provider: Arc<dyn SearchProvider> = match &config.search.fixtures {
        Some(dir) => Arc::new(FixtureProvider::new(dir)),
        None if args.mock => Arc::new(NoSearch),
        None => Arc::new(DuckDuckGoProvider::new(&config.search.endpoint)?),
    };
    let cache = match &config.search.cache {
        Some(path) => QueryCache::open(path).with_context(|| format!("opening search cache {}", path.display()))?,
        None => QueryCache::in_memory(),
    };
    Ok((provider, Arc::new(cache)))
}

fn load_samples(dataset: &Path, run: &RunSettings) -> Result<Vec<Sample>> {
    let records = load_dataset(dataset)?;
    let missing = records.iter().filter(|r| r.image_missing).count();
    if missing > 0 {
        warn!("{missing} record(s) reference missing images; their vision stages will be uncertain");
    }
    let records = if run.fraction < 1.0 {
        stratified_sample(&records, run.fraction, run.seed)?
    } else if run.fraction == 1.0 {
        records
    } else {
        bail!("fraction must be in (0, 1], got {}", run.fraction);
    };
    Ok(records.iter().map(|r| r.to_sample()).collect())
}

pub fn cmd_run(args: RunArgs, env: &HashMap<String, String>) -> Result<()> {
    let mut config = resolve(args.config.as_deref(), env)?;
    let ablation = apply_flags(&args, &mut config);
    config.pipeline.validate()?;
    if config.run.parallelism == 0 {
        bail!("parallelism must be at least 1");
    }
    let pipeline_config = config.pipeline.clone();

    // everything that can fail cheaply happens before the first call
    let backend = build_backend(&args, &pipeline_config, env)?;
    let samples = load_samples(&args.dataset, &config.run)?;
    let (provider, cache) = build_search(&args, &pipeline_config)?;

    let gateway = Arc::new(
        Gateway::new(backend, pipeline_config.backend.model.clone())
            .with_max_tokens(pipeline_config.backend.max_tokens),
    );
    let search = Arc::new(SearchClient::new(
        provider,
        cache.clone(),
        pipeline_config.retrieval.clone(),
        Arc::new(SystemClock::new()),
    ));
    let timing: Arc<dyn Clock> = if args.mock {
        Arc::new(FrozenClock)
    } else {
        Arc::new(SystemClock::new())
    };
    let pipeline =
        Pipeline::new(pipeline_config.clone(), gateway.clone(), Some(search.clone()))?.with_timing_clock(timing);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let started = Utc::now();
    let reports = pipeline.run_batch(&samples, config.run.parallelism);
    let finished = Utc::now();
    if let Err(e) = cache.save() {
        warn!("could not save search cache: {e}");
    }

    let usage = gateway.usage();
    let stats = cache.stats();
    let manifest = RunManifest {
        config: pipeline_config.clone(),
        run: config.run.clone(),
        ablation,
        mock: args.mock,
        dataset: args.dataset.clone(),
        sample_count: reports.len(),
        sample_ids: reports.iter().map(|r| r.sample_id.clone()).collect(),
        started_at: timestamp(started),
        finished_at: timestamp(finished),
        usage,
        cost: estimate_cost(
            usage.prompt_tokens,
            usage.completion_tokens,
            &pipeline_config.backend.prices,
        ),
        cache: CacheCounts {
            hits: stats.hits,
            misses: stats.misses,
            entries: stats.entries,
        },
        search_dispatches: search.dispatch_count(),
        n_uncertain: reports
            .iter()
            .filter(|r| r.judge.label == VerdictLabel::Uncertain)
            .count(),
        n_errors: reports.iter().filter(|r| r.error.is_some()).count(),
    };
    let manifest_path = args.out.join(MANIFEST);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    println!(
        "{} samples -> {} ({} uncertain, {} with errors)",
        manifest.sample_count,
        args.out.join(REPORTS_DIR).display(),
        manifest.n_uncertain,
        manifest.n_errors
    );
    println!(
        "calls {} | tokens {} prompt / {} completion | cost ${:.4} | cache {} hits / {} misses",
        usage.calls, usage.prompt_tokens, usage.completion_tokens, manifest.cost, stats.hits, stats.misses
    );
    let unwritten = reports
        .iter()
        .filter(|r| r.error.as_deref().is_some_and(|e| e.starts_with("report not written")))
        .count();
    if unwritten > 0 {
        bail!("{unwritten} report(s) could not be written");
    }
    Ok(())
}

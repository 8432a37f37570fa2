//! Configuration layering: defaults, then environment, then the config
//! file, then command-line flags.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mirage::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_CACHE: &str = ".mirage/search-cache.json";

pub const ENV_KEYS: [&str; 2] = ["MIRAGE_API_KEY", "OPENAI_API_KEY"];
pub const ENV_API_URL: &str = "MIRAGE_API_URL";
pub const ENV_MODEL: &str = "MIRAGE_MODEL";
pub const ENV_SEARCH_URL: &str = "MIRAGE_SEARCH_URL";
pub const ENV_CACHE: &str = "MIRAGE_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub parallelism: usize,
    pub fraction: f64,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            parallelism: 4,
            fraction: 1.0,
            seed: 42,
        }
    }
}

/// Everything a run can be configured with. In TOML the pipeline fields
/// sit at the top level and the run settings under `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub run: RunSettings,
}

impl Default for FileConfig {
    fn default() -> Self {
        let mut pipeline = PipelineConfig::default();
        pipeline.search.cache = Some(PathBuf::from(DEFAULT_CACHE));
        FileConfig {
            pipeline,
            run: RunSettings::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set(root: &mut Value, path: &[&str], value: &str) {
    let mut v = serde_json::json!(value);
    for key in path.iter().rev() {
        v = serde_json::json!({ *key: v });
    }
    merge(root, v);
}

fn env_layer(env: &HashMap<String, String>) -> Value {
    let mut layer = Value::Object(Default::default());
    let pairs: [(&str, &[&str]); 4] = [
        (ENV_MODEL, &["backend", "model"]),
        (ENV_API_URL, &["backend", "base_url"]),
        (ENV_SEARCH_URL, &["search", "endpoint"]),
        (ENV_CACHE, &["search", "cache"]),
    ];
    for (var, path) in pairs {
        if let Some(v) = env.get(var).filter(|v| !v.trim().is_empty()) {
            set(&mut layer, path, v);
        }
    }
    layer
}

// optional fields absent from the serialized defaults
const OPTIONAL_KEYS: [&str; 3] = ["output_dir", "backend.mock_fixtures", "search.fixtures"];

fn unknown_keys(schema: &Value, given: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(schema), Value::Object(given)) = (schema, given) else {
        return;
    };
    for (k, v) in given {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match schema.get(k) {
            Some(s) => unknown_keys(s, v, &path, out),
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => out.push(path),
        }
    }
}

/// Defaults overlaid with environment values and then the config file.
pub fn resolve(file: Option<&Path>, env: &HashMap<String, String>) -> Result<FileConfig> {
    let mut value = serde_json::to_value(FileConfig::default())?;
    merge(&mut value, env_layer(env));
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let parsed: toml::Value =
            toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display()))?;
        let parsed = serde_json::to_value(parsed)?;
        let mut unknown = Vec::new();
        unknown_keys(&value, &parsed, "", &mut unknown);
        if !unknown.is_empty() {
            bail!("unknown keys in {}: {}", path.display(), unknown.join(", "));
        }
        merge(&mut value, parsed);
    }
    let config: FileConfig = serde_json::from_value(value).context("invalid configuration")?;
    if config.run.parallelism == 0 {
        bail!("parallelism must be at least 1");
    }
    Ok(config)
}

pub fn api_key(env: &HashMap<String, String>) -> Option<String> {
    ENV_KEYS
        .iter()
        .filter_map(|k| env.get(*k))
        .map(|v| v.trim())
        .find(|v| !v.is_empty())
        .map(str::to_owned)
}

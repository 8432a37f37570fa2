use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use mirage::claims::QueryCache;

use crate::config::{DEFAULT_CACHE, ENV_CACHE};
use crate::{CacheAction, CacheArgs};

pub fn cmd_cache(args: CacheArgs, env: &HashMap<String, String>) -> Result<()> {
    let path = args
        .cache
        .or_else(|| env.get(ENV_CACHE).filter(|v| !v.trim().is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE));
    let cache = QueryCache::open(&path).with_context(|| format!("opening cache {}", path.display()))?;
    match args.action {
        CacheAction::Stats => {
            println!("cache: {}", path.display());
            println!("entries: {}", cache.len());
        }
        CacheAction::Clear => {
            let n = cache.len();
            cache.clear();
            cache.save().with_context(|| format!("writing {}", path.display()))?;
            println!("cleared {n} entries from {}", path.display());
        }
        CacheAction::Export { dest } => {
            cache
                .export(&dest)
                .with_context(|| format!("writing {}", dest.display()))?;
            println!("exported {} entries to {}", cache.len(), dest.display());
        }
    }
    Ok(())
}

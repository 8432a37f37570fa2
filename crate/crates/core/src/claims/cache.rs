use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::search::SearchResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub results: Vec<SearchResult>,
    /// Unix seconds.
    pub fetched_at: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    entries: BTreeMap<String, CacheEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

/// Normalized query -> results. Optionally backed by a JSON file; entries
/// never expire.
#[derive(Debug, Default)]
pub struct QueryCache {
    entries: RwLock<BTreeMap<String, CacheEntry>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl QueryCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the cache file at `path`. A missing file is an empty cache.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let entries = match fs::read_to_string(&path) {
            Ok(text) => {
                let file: CacheFile =
                    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                file.entries
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(QueryCache {
            entries: RwLock::new(entries),
            path: Some(path),
            ..Default::default()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<Vec<SearchResult>> {
        let found = self
            .entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .map(|e| e.results.clone());
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    /// Last writer wins for identical keys.
    pub fn put(&self, key: impl Into<String>, results: Vec<SearchResult>) {
        let fetched_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key.into(), CacheEntry { results, fetched_at });
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.write().expect("cache lock poisoned").clear();
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.len(),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    /// Writes the cache back to its file, if it has one.
    pub fn save(&self) -> io::Result<()> {
        match &self.path {
            Some(p) => self.export(p),
            None => Ok(()),
        }
    }

    /// Writes all entries as a JSON archive to `path` (atomic rename).
    pub fn export(&self, path: &Path) -> io::Result<()> {
        let file = CacheFile {
            version: 1,
            entries: self.entries.read().expect("cache lock poisoned").clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(rank: u32) -> SearchResult {
        SearchResult {
            title: format!("t{rank}"),
            url: format!("https://e.com/{rank}"),
            snippet: "s".into(),
            rank,
        }
    }

    #[test]
    fn hit_miss_accounting() {
        let c = QueryCache::in_memory();
        assert!(c.get("a").is_none());
        c.put("a", vec![result(1)]);
        assert_eq!(c.get("a").unwrap().len(), 1);
        assert_eq!(
            c.stats(),
            CacheStats {
                entries: 1,
                hits: 1,
                misses: 1
            }
        );
        c.clear();
        assert!(c.is_empty());
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/cache.json");
        let c = QueryCache::open(&path).unwrap();
        assert!(c.is_empty());
        c.put("gator bowl", vec![result(1), result(2)]);
        c.save().unwrap();
        let again = QueryCache::open(&path).unwrap();
        assert_eq!(again.get("gator bowl").unwrap(), vec![result(1), result(2)]);
    }

    #[test]
    fn corrupt_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        fs::write(&path, "{not json").unwrap();
        assert!(QueryCache::open(&path).is_err());
    }
}

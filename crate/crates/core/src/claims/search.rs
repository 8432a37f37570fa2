use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::QueryCache;
use super::query::normalize_query;
use crate::clock::{Backoff, Clock};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub url: String,
    pub snippet: String,
    /// 1-based position within its query's result list.
    pub rank: u32,
}

/// A provider hit before ranking; also the fixture file record format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHit {
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search timed out")]
    Timeout,
    #[error("search transport error: {0}")]
    Transport(String),
    #[error("search failed: {0}")]
    Permanent(String),
}

impl SearchError {
    fn is_transient(&self) -> bool {
        matches!(self, SearchError::Timeout | SearchError::Transport(_))
    }
}

pub trait SearchProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Live providers are paced by the global rate limiter; fixture
    /// providers are not.
    fn is_live(&self) -> bool;

    fn fetch(&self, query: &str, max_results: usize, timeout: Duration) -> Result<Vec<RawHit>, SearchError>;
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalPolicy {
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub per_query_timeout: Duration,
    #[serde(with = "secs")]
    pub min_interval_between_queries: Duration,
    #[serde(with = "secs")]
    pub backoff_base: Duration,
    pub results_per_query: usize,
    pub chains: u8,
    pub questions_per_chain: usize,
    /// QA pairs shown to the question generator in chains 2 and 3.
    pub max_recent_qa: usize,
    /// Answers longer than this are truncated in the question prompt.
    pub max_answer_chars: usize,
}

impl Default for RetrievalPolicy {
    fn default() -> Self {
        RetrievalPolicy {
            max_retries: 2,
            per_query_timeout: Duration::from_secs(35),
            min_interval_between_queries: Duration::from_millis(1800),
            backoff_base: Duration::from_secs(1),
            results_per_query: 5,
            chains: 3,
            questions_per_chain: 3,
            max_recent_qa: 6,
            max_answer_chars: 400,
        }
    }
}

impl RetrievalPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_query_timeout.is_zero() {
            return Err("per_query_timeout must be positive".into());
        }
        if self.results_per_query == 0 || self.questions_per_chain == 0 {
            return Err("results_per_query and questions_per_chain must be positive".into());
        }
        if !(1..=3).contains(&self.chains) {
            return Err(format!("chains must be in 1..=3, got {}", self.chains));
        }
        Ok(())
    }

    pub fn backoff(&self) -> Backoff {
        Backoff {
            max_retries: self.max_retries,
            base_delay: self.backoff_base,
        }
    }
}

/// Enforces a minimum spacing between consecutive dispatches, across threads.
pub struct RateLimiter {
    min_interval: Duration,
    clock: Arc<dyn Clock>,
    last: Mutex<Option<Duration>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            min_interval,
            clock,
            last: Mutex::new(None),
        }
    }

    /// Blocks until a dispatch is allowed and returns its timestamp.
    pub fn acquire(&self) -> Duration {
        // holding the lock across the sleep serializes waiting dispatchers
        let mut last = self.last.lock().expect("rate limiter poisoned");
        if let Some(prev) = *last {
            let earliest = prev + self.min_interval;
            let now = self.clock.now();
            if now < earliest {
                self.clock.sleep(earliest - now);
            }
        }
        let t = self.clock.now();
        *last = Some(t);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchOutcome {
    pub results: Vec<SearchResult>,
    pub from_cache: bool,
    pub failed: bool,
}

/// Cache-first search under a [`RetrievalPolicy`].
pub struct SearchClient {
    provider: Arc<dyn SearchProvider>,
    cache: Arc<QueryCache>,
    limiter: RateLimiter,
    policy: RetrievalPolicy,
    clock: Arc<dyn Clock>,
    dispatches: AtomicU64,
}

impl SearchClient {
    pub fn new(
        provider: Arc<dyn SearchProvider>,
        cache: Arc<QueryCache>,
        policy: RetrievalPolicy,
        clock: Arc<dyn Clock>,
    ) -> Self {
        SearchClient {
            limiter: RateLimiter::new(policy.min_interval_between_queries, clock.clone()),
            provider,
            cache,
            policy,
            clock,
            dispatches: AtomicU64::new(0),
        }
    }

    pub fn cache(&self) -> &Arc<QueryCache> {
        &self.cache
    }

    pub fn policy(&self) -> &RetrievalPolicy {
        &self.policy
    }

    /// Provider requests issued so far, including retries.
    pub fn dispatch_count(&self) -> u64 {
        self.dispatches.load(Ordering::Relaxed)
    }

    pub fn search(&self, query: &str) -> SearchOutcome {
        let key = normalize_query(query);
        if key.is_empty() {
            return SearchOutcome::default();
        }
        if let Some(results) = self.cache.get(&key) {
            return SearchOutcome {
                results,
                from_cache: true,
                failed: false,
            };
        }
        let timeout = self.policy.per_query_timeout;
        let limit = self.policy.results_per_query;
        let fetched = self
            .policy
            .backoff()
            .run(self.clock.as_ref(), SearchError::is_transient, |attempt| {
                if self.provider.is_live() {
                    self.limiter.acquire();
                }
                self.dispatches.fetch_add(1, Ordering::Relaxed);
                if attempt > 0 {
                    debug!("{}: retry {attempt} for {key:?}", self.provider.name());
                }
                let started = self.clock.now();
                let hits = self.provider.fetch(query, limit, timeout)?;
                if self.clock.now().saturating_sub(started) > timeout {
                    return Err(SearchError::Timeout);
                }
                Ok(hits)
            });
        match fetched {
            Ok(hits) => {
                let results = rank(hits, limit);
                self.cache.put(key, results.clone());
                SearchOutcome {
                    results,
                    from_cache: false,
                    failed: false,
                }
            }
            Err(e) => {
                warn!("{}: giving up on {key:?}: {e}", self.provider.name());
                SearchOutcome {
                    results: Vec::new(),
                    from_cache: false,
                    failed: true,
                }
            }
        }
    }
}

fn rank(hits: Vec<RawHit>, limit: usize) -> Vec<SearchResult> {
    hits.into_iter()
        .take(limit)
        .zip(1u32..)
        .map(|(h, rank)| SearchResult {
            title: h.title,
            url: h.url,
            snippet: h.snippet,
            rank,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    struct Counting {
        hits: usize,
        calls: AtomicU64,
    }

    impl SearchProvider for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn is_live(&self) -> bool {
            false
        }
        fn fetch(&self, q: &str, _: usize, _: Duration) -> Result<Vec<RawHit>, SearchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok((0..self.hits)
                .map(|i| RawHit {
                    title: format!("{q} {i}"),
                    url: format!("https://e.com/{i}"),
                    snippet: String::new(),
                })
                .collect())
        }
    }

    fn client(provider: Arc<Counting>) -> SearchClient {
        SearchClient::new(
            provider,
            Arc::new(QueryCache::in_memory()),
            RetrievalPolicy::default(),
            Arc::new(ManualClock::new()),
        )
    }

    #[test]
    fn truncates_to_five_with_unique_ranks() {
        let p = Arc::new(Counting {
            hits: 7,
            calls: AtomicU64::new(0),
        });
        let out = client(p).search("Query");
        assert_eq!(out.results.len(), 5);
        let ranks: Vec<u32> = out.results.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn cached_query_makes_no_provider_call() {
        let p = Arc::new(Counting {
            hits: 2,
            calls: AtomicU64::new(0),
        });
        let c = client(p.clone());
        let first = c.search("Did X happen?");
        let second = c.search("  did x HAPPEN ");
        assert!(!first.from_cache && second.from_cache);
        assert_eq!(first.results, second.results);
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_query_is_a_no_op() {
        let p = Arc::new(Counting {
            hits: 2,
            calls: AtomicU64::new(0),
        });
        let c = client(p.clone());
        assert_eq!(c.search("  ?"), SearchOutcome::default());
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn limiter_spaces_dispatches() {
        let clock = Arc::new(ManualClock::new());
        let limiter = RateLimiter::new(Duration::from_millis(1800), clock.clone());
        let a = limiter.acquire();
        clock.advance(Duration::from_millis(500));
        let b = limiter.acquire();
        clock.advance(Duration::from_secs(5));
        let c = limiter.acquire();
        assert_eq!(b - a, Duration::from_millis(1800));
        assert_eq!(c - b, Duration::from_secs(5));
    }

    #[test]
    fn policy_defaults_and_validation() {
        let p = RetrievalPolicy::default();
        assert_eq!(p.validate(), Ok(()));
        assert_eq!(p.per_query_timeout, Duration::from_secs(35));
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["min_interval_between_queries"], 1.8);
        let back: RetrievalPolicy = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
        let bad = RetrievalPolicy { chains: 4, ..p };
        assert!(bad.validate().is_err());
    }
}

//! Shipped [`SearchProvider`] implementations.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;

use super::query::normalize_query;
use super::search::{RawHit, SearchError, SearchProvider};

/// File name holding the recorded results for a normalized query.
///
/// `[a-z0-9]` pass through, spaces become `_`, every other byte is `%XX`.
/// Normalized queries are lowercase, so the mapping is injective.
pub fn fixture_file_name(normalized: &str) -> String {
    let mut name = String::with_capacity(normalized.len() + 5);
    for b in normalized.bytes() {
        match b {
            b'a'..=b'z' | b'0'..=b'9' => name.push(b as char),
            b' ' => name.push('_'),
            other => name.push_str(&format!("%{other:02X}")),
        }
    }
    name.push_str(".json");
    name
}

/// Replays recorded results: one JSON array of `{title, url, snippet}` per
/// normalized query. A query without a file has no results.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    dir: PathBuf,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureProvider { dir: dir.into() }
    }

    pub fn path_for(&self, query: &str) -> PathBuf {
        self.dir.join(fixture_file_name(&normalize_query(query)))
    }

    /// Writes a fixture file for `query`.
    pub fn record(dir: &Path, query: &str, hits: &[RawHit]) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(fixture_file_name(&normalize_query(query)));
        let text = serde_json::to_string_pretty(hits).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        fs::write(&path, text)?;
        Ok(path)
    }
}

impl SearchProvider for FixtureProvider {
    fn name(&self) -> &str {
        "fixture"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn fetch(&self, query: &str, max_results: usize, _timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        let path = self.path_for(query);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(SearchError::Permanent(format!("{}: {e}", path.display()))),
        };
        let mut hits: Vec<RawHit> =
            serde_json::from_str(&text).map_err(|e| SearchError::Permanent(format!("{}: {e}", path.display())))?;
        hits.truncate(max_results);
        Ok(hits)
    }
}

/// Client for DuckDuckGo's HTML results page (or anything serving the same markup).
pub struct DuckDuckGoProvider {
    http: reqwest::blocking::Client,
    endpoint: String,
}

impl DuckDuckGoProvider {
    pub const DEFAULT_ENDPOINT: &'static str = "https://html.duckduckgo.com/html/";

    pub fn new(endpoint: impl Into<String>) -> Result<Self, SearchError> {
        let http = reqwest::blocking::Client::builder()
            .user_agent("Mozilla/5.0 (compatible; mirage-verifier/0.1)")
            .build()
            .map_err(|e| SearchError::Permanent(e.to_string()))?;
        Ok(DuckDuckGoProvider {
            http,
            endpoint: endpoint.into(),
        })
    }
}

impl SearchProvider for DuckDuckGoProvider {
    fn name(&self) -> &str {
        "duckduckgo"
    }

    fn is_live(&self) -> bool {
        true
    }

    fn fetch(&self, query: &str, max_results: usize, timeout: Duration) -> Result<Vec<RawHit>, SearchError> {
        let response = self
            .http
            .get(&self.endpoint)
            .query(&[("q", query)])
            .timeout(timeout)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    SearchError::Timeout
                } else {
                    SearchError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        // DuckDuckGo answers throttled clients with 202 and an empty page
        if status.as_u16() == 202 || status.as_u16() == 429 || status.is_server_error() {
            return Err(SearchError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(SearchError::Permanent(format!("HTTP {status}")));
        }
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                SearchError::Timeout
            } else {
                SearchError::Transport(e.to_string())
            }
        })?;
        let mut hits = parse_results_html(&body);
        hits.truncate(max_results);
        Ok(hits)
    }
}

fn regexes() -> &'static (Regex, Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r#"(?s)<a\b([^>]*class="[^"]*\bresult__a\b[^"]*"[^>]*)>(.*?)</a>"#).unwrap(),
            Regex::new(r#"(?s)<(?:a|div|td)\b[^>]*class="[^"]*\bresult__snippet\b[^"]*"[^>]*>(.*?)</(?:a|div|td)>"#)
                .unwrap(),
            Regex::new(r#"href="([^"]*)""#).unwrap(),
            Regex::new(r"(?s)<[^>]*>").unwrap(),
        )
    })
}

/// Extracts hits from a DuckDuckGo HTML results page.
pub fn parse_results_html(html: &str) -> Vec<RawHit> {
    let (anchor, snippet, href, tag) = regexes();
    let snippets: Vec<(usize, String)> = snippet
        .captures_iter(html)
        .map(|c| (c.get(0).unwrap().start(), clean_text(&c[1], tag)))
        .collect();
    let anchors: Vec<_> = anchor.captures_iter(html).collect();
    let mut hits = Vec::new();
    for (i, cap) in anchors.iter().enumerate() {
        let Some(raw_href) = href.captures(&cap[1]).map(|h| decode_entities(&h[1])) else {
            continue;
        };
        let url = resolve_redirect(&raw_href);
        if url.is_empty() {
            continue;
        }
        let start = cap.get(0).unwrap().end();
        let end = anchors.get(i + 1).map_or(html.len(), |n| n.get(0).unwrap().start());
        let snippet = snippets
            .iter()
            .find(|(pos, _)| *pos >= start && *pos < end)
            .map(|(_, s)| s.clone())
            .unwrap_or_default();
        hits.push(RawHit {
            title: clean_text(&cap[2], tag),
            url,
            snippet,
        });
    }
    hits
}

fn resolve_redirect(href: &str) -> String {
    let absolute = if href.starts_with("//") {
        format!("https:{href}")
    } else if href.starts_with('/') {
        format!("https://duckduckgo.com{href}")
    } else {
        href.to_owned()
    };
    match url::Url::parse(&absolute) {
        Ok(u) => u
            .query_pairs()
            .find(|(k, _)| k == "uddg")
            .map(|(_, v)| v.into_owned())
            .unwrap_or(absolute),
        Err(_) => absolute,
    }
}

fn clean_text(fragment: &str, tag: &Regex) -> String {
    let stripped = tag.replace_all(fragment, "");
    decode_entities(&stripped)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let decoded = tail.find(';').filter(|&end| end <= 10).and_then(|end| {
            let entity = &tail[1..end];
            let ch = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ => entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            ch.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

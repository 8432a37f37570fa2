use log::info;
use serde::Deserialize;

use super::search::SearchResult;
use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::model::{ChainIndex, Citation, Confidence, QAItem};
use crate::prompts::{render, ANSWER_SYSTEM, ANSWER_USER};

pub const MAX_SOURCES: usize = 5;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CitationRepr {
    Object {
        #[serde(default)]
        url: Option<String>,
        #[serde(default)]
        title: Option<String>,
    },
    Url(String),
}

#[derive(Debug, Deserialize)]
struct AnswerOutput {
    answer: String,
    #[serde(default)]
    citations: Vec<CitationRepr>,
    confidence: Confidence,
    #[serde(default)]
    rationale: String,
}

impl StageOutput for AnswerOutput {}

impl AnswerOutput {
    // citations without a url are dropped rather than failing the answer
    fn citations(self) -> Vec<Citation> {
        self.citations
            .into_iter()
            .filter_map(|c| match c {
                CitationRepr::Object { url, title } => {
                    Citation::new(url.unwrap_or_default(), title.unwrap_or_default()).ok()
                }
                CitationRepr::Url(url) => Citation::new(url, "").ok(),
            })
            .collect()
    }
}

pub fn render_sources(results: &[SearchResult]) -> String {
    if results.is_empty() {
        return "(no sources found)\n".to_owned();
    }
    results
        .iter()
        .take(MAX_SOURCES)
        .enumerate()
        .map(|(i, r)| format!("[{}] {}\nURL: {}\nSnippet: {}\n", i + 1, r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_answer_prompt(question: &str, results: &[SearchResult]) -> String {
    let sources = render_sources(results);
    render(ANSWER_USER, &[("question", question), ("sources", &sources)])
}

/// Answers `question` from the search snippets. The model is called even
/// with zero sources; parse exhaustion gives a zero-confidence item.
pub fn synthesize_answer(
    gateway: &Gateway,
    question: &str,
    results: &[SearchResult],
    chain_index: ChainIndex,
    meter: &UsageCounter,
) -> QAItem {
    let user = render_answer_prompt(question, results);
    match gateway.call_structured::<AnswerOutput>(Stage::Answer, ANSWER_SYSTEM, &user, &[], meter) {
        Ok(out) => {
            let confidence = out.confidence;
            let answer = out.answer.clone();
            let rationale = out.rationale.clone();
            QAItem {
                question: question.to_owned(),
                answer,
                citations: out.citations(),
                confidence,
                rationale,
                chain_index,
            }
        }
        Err(e) => {
            info!("answer synthesis failed for {question:?}: {e}");
            QAItem {
                question: question.to_owned(),
                answer: String::new(),
                citations: Vec::new(),
                confidence: Confidence::ZERO,
                rationale: format!("no usable answer: {e}"),
                chain_index,
            }
        }
    }
}

/// Index of the most confident item; ties go to more citations, then to
/// the earlier question.
pub fn select_best(items: &[QAItem]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, item) in items.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &items[b];
                item.confidence > cur.confidence
                    || (item.confidence == cur.confidence && item.citations_count() > cur.citations_count())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{prompt_hash, MockBackend};
    use std::sync::Arc;

    fn sr(i: u32) -> SearchResult {
        SearchResult {
            title: format!("Title {i}"),
            url: format!("https://news.example/{i}"),
            snippet: format!("snippet {i}"),
            rank: i,
        }
    }

    fn qa(conf: f64, cites: usize) -> QAItem {
        QAItem {
            question: "q".into(),
            answer: "a".into(),
            citations: (0..cites)
                .map(|i| Citation::new(format!("https://c/{i}"), "t").unwrap())
                .collect(),
            confidence: Confidence::new(conf).unwrap(),
            rationale: String::new(),
            chain_index: ChainIndex::new(1).unwrap(),
        }
    }

    fn answer_with(results: &[SearchResult], reply: &str) -> QAItem {
        let mut mock = MockBackend::new();
        mock.insert(
            Stage::Answer,
            prompt_hash(&render_answer_prompt("Q?", results), &[]),
            reply,
        );
        let gw = Gateway::new(Arc::new(mock), "m");
        synthesize_answer(&gw, "Q?", results, ChainIndex::new(2).unwrap(), &UsageCounter::new())
    }

    #[test]
    fn answer_with_two_citations() {
        let results = [sr(1), sr(2), sr(3)];
        let item = answer_with(
            &results,
            r#"{"answer":"Yes.","citations":[{"url":"https://news.example/1","title":"Title 1"},{"url":"https://news.example/3","title":"Title 3"}],"confidence":0.8,"rationale":"two sources agree"}"#,
        );
        assert_eq!(item.citations_count(), 2);
        assert_eq!(item.confidence.value(), 0.8);
        assert_eq!(item.chain_index.get(), 2);
    }

    #[test]
    fn zero_sources_low_confidence() {
        let item = answer_with(
            &[],
            r#"{"answer":"Unknown.","citations":[],"confidence":0.1,"rationale":"sparse"}"#,
        );
        assert_eq!(item.confidence.value(), 0.1);
        assert!(item.citations.is_empty());
    }

    #[test]
    fn malformed_reply_degrades() {
        let item = answer_with(&[sr(1)], "I think yes");
        assert_eq!(item.confidence, Confidence::ZERO);
        assert!(item.citations.is_empty());
    }

    #[test]
    fn citations_without_url_are_dropped() {
        let item = answer_with(
            &[sr(1)],
            r#"{"answer":"a","citations":[{"title":"no url"},"https://x.y",{"url":"","title":"e"}],"confidence":0.5}"#,
        );
        assert_eq!(item.citations, vec![Citation::new("https://x.y", "").unwrap()]);
    }

    #[test]
    fn sources_block_layout() {
        let p = render_answer_prompt("Did it happen?", &[sr(1), sr(2)]);
        assert!(p.starts_with("Question: Did it happen?\n\nSources:\n[1] Title 1\nURL: https://news.example/1\nSnippet: snippet 1\n\n[2] Title 2\n"));
        assert!(p.contains("Snippet: snippet 2\n\nInstructions: Produce strict JSON with keys:"));
        let many: Vec<_> = (1..=7).map(sr).collect();
        assert!(!render_sources(&many).contains("[6]"));
    }

    #[test]
    fn select_best_rules() {
        assert_eq!(select_best(&[qa(0.5, 0), qa(0.9, 0), qa(0.7, 0)]), Some(1));
        assert_eq!(select_best(&[qa(0.8, 1), qa(0.8, 3)]), Some(1));
        assert_eq!(select_best(&[qa(0.8, 2), qa(0.8, 2)]), Some(0));
        assert_eq!(select_best(&[qa(0.3, 0)]), Some(0));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn select_best_matches_brute_force_ordering() {
        // enumerate every (conf, cites) pair over a small grid, three items at a time
        let grid: Vec<(f64, usize)> = [0.0, 0.8, 1.0]
            .iter()
            .flat_map(|&c| (0..3).map(move |n| (c, n)))
            .collect();
        for a in &grid {
            for b in &grid {
                for c in &grid {
                    let items = [qa(a.0, a.1), qa(b.0, b.1), qa(c.0, c.1)];
                    let keys = [a, b, c];
                    let mut expected = 0;
                    for i in 1..3 {
                        let (bc, bn) = keys[expected];
                        let (ic, inn) = keys[i];
                        if (ic, inn) > (bc, bn) {
                            expected = i;
                        }
                    }
                    assert_eq!(select_best(&items), Some(expected));
                }
            }
        }
    }
}

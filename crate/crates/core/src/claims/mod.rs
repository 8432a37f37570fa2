//! Stage 3: chained question generation, web retrieval and citation-grounded
//! answer synthesis.
//!
//! Chains run strictly in sequence within a sample: each chain's question
//! prompt sees every earlier question and the most recent answers. The
//! [`SearchClient`] (cache, rate limiter) is shared across samples.

mod answer;
mod cache;
mod providers;
mod query;
mod questions;
mod search;

use std::collections::HashSet;

pub use answer::{render_answer_prompt, render_sources, select_best, synthesize_answer, MAX_SOURCES};
pub use cache::{CacheEntry, CacheStats, QueryCache};
pub use providers::{fixture_file_name, parse_results_html, DuckDuckGoProvider, FixtureProvider};
pub use query::normalize_query;
pub use questions::{generate_questions, render_questions_prompt, QuestionContext};
pub use search::{
    RateLimiter, RawHit, RetrievalPolicy, SearchClient, SearchError, SearchOutcome, SearchProvider, SearchResult,
};

use crate::backend::{Gateway, UsageCounter};
use crate::model::{ChainIndex, ClaimEvidence, QAItem};

pub fn run_chains(
    gateway: &Gateway,
    search: &SearchClient,
    headline: &str,
    policy: &RetrievalPolicy,
    meter: &UsageCounter,
) -> ClaimEvidence {
    let ctx = QuestionContext {
        max_recent_qa: policy.max_recent_qa,
        max_answer_chars: policy.max_answer_chars,
    };
    let mut asked: Vec<String> = Vec::new();
    let mut issued: Vec<String> = Vec::new();
    let mut issued_set: HashSet<String> = HashSet::new();
    let mut failures = Vec::new();
    let mut all_qa: Vec<QAItem> = Vec::new();

    for chain in 1..=policy.chains.min(ChainIndex::MAX) {
        let chain_index = ChainIndex::new(chain).expect("chain bounded above");
        let questions = generate_questions(
            gateway,
            headline,
            &asked,
            &all_qa,
            policy.questions_per_chain,
            ctx,
            meter,
        );
        for question in questions {
            let key = normalize_query(&question);
            if !issued_set.insert(key.clone()) {
                continue;
            }
            issued.push(key.clone());
            asked.push(question.clone());
            let outcome = search.search(&question);
            if outcome.failed {
                failures.push(key);
            }
            all_qa.push(synthesize_answer(
                gateway,
                &question,
                &outcome.results,
                chain_index,
                meter,
            ));
        }
    }

    let best_per_chain = best_per_chain(&all_qa);
    ClaimEvidence {
        all_qa,
        best_per_chain,
        queries_issued: issued,
        retrieval_failures: failures,
    }
}

/// One best item per chain index present in `all_qa`, in chain order.
pub fn best_per_chain(all_qa: &[QAItem]) -> Vec<QAItem> {
    let mut chains: Vec<ChainIndex> = all_qa.iter().map(|q| q.chain_index).collect();
    chains.sort();
    chains.dedup();
    chains
        .into_iter()
        .filter_map(|c| {
            let items: Vec<QAItem> = all_qa.iter().filter(|q| q.chain_index == c).cloned().collect();
            select_best(&items).map(|i| items[i].clone())
        })
        .collect()
}

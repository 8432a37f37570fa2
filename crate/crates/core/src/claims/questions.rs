use std::collections::HashSet;

use log::info;

use super::query::normalize_query;
use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::model::QAItem;
use crate::prompts::{render, QUESTIONS_SYSTEM, QUESTIONS_USER};

impl StageOutput for Vec<String> {}

const NONE: &str = "(none)";

/// Context caps for the question prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuestionContext {
    pub max_recent_qa: usize,
    pub max_answer_chars: usize,
}

impl Default for QuestionContext {
    fn default() -> Self {
        QuestionContext {
            max_recent_qa: 6,
            max_answer_chars: 400,
        }
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((cut, _)) => format!("{}...", &s[..cut]),
        None => s.to_owned(),
    }
}

pub fn render_questions_prompt(
    headline: &str,
    prior_questions: &[String],
    recent_qa: &[QAItem],
    k: usize,
    ctx: QuestionContext,
) -> String {
    let prior = if prior_questions.is_empty() {
        NONE.to_owned()
    } else {
        prior_questions
            .iter()
            .map(|q| format!("- {q}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let skip = recent_qa.len().saturating_sub(ctx.max_recent_qa);
    let answered = if recent_qa.is_empty() {
        NONE.to_owned()
    } else {
        recent_qa[skip..]
            .iter()
            .map(|qa| {
                format!(
                    "Q: {}\nA: {}",
                    qa.question,
                    truncate_chars(&qa.answer, ctx.max_answer_chars)
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let k = k.to_string();
    render(
        QUESTIONS_USER,
        &[
            ("k", &k),
            ("headline", headline),
            ("prior_questions", &prior),
            ("answered_qa_pairs", &answered),
        ],
    )
}

/// Asks for `k` new queries and drops any whose normalized form was already
/// asked (or repeats within the reply). Parse exhaustion yields no questions.
pub fn generate_questions(
    gateway: &Gateway,
    headline: &str,
    prior_questions: &[String],
    recent_qa: &[QAItem],
    k: usize,
    ctx: QuestionContext,
    meter: &UsageCounter,
) -> Vec<String> {
    let user = render_questions_prompt(headline, prior_questions, recent_qa, k, ctx);
    let proposed: Vec<String> = match gateway.call_structured(Stage::Questions, QUESTIONS_SYSTEM, &user, &[], meter) {
        Ok(v) => v,
        Err(e) => {
            info!("question generation produced nothing usable: {e}");
            return Vec::new();
        }
    };
    let mut seen: HashSet<String> = prior_questions.iter().map(|q| normalize_query(q)).collect();
    proposed
        .into_iter()
        .map(|q| q.trim().to_owned())
        .filter(|q| {
            let key = normalize_query(q);
            !key.is_empty() && seen.insert(key)
        })
        .take(k)
        .collect()
}

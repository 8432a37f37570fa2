use log::info;
use serde::{Deserialize, Deserializer, Serialize};

use super::JudgeInput;
use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::model::{Confidence, JudgeVerdict, VerdictLabel};
use crate::prompts::{render, JUDGE_SYSTEM, JUDGE_USER};

#[derive(Serialize)]
struct QaSummary<'a> {
    question: &'a str,
    answer: &'a str,
    confidence: Confidence,
    citations_count: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Signal<T> {
    Present(T),
    Uncertain { status: &'static str },
}

#[derive(Serialize)]
struct RelevancySignal<'a> {
    aligned: &'static str,
    confidence: Confidence,
    explanation: &'a str,
}

#[derive(Serialize)]
struct VisualSignal<'a> {
    ai_generated: bool,
    confidence: Confidence,
    anomalies: &'a [String],
}

#[derive(Serialize)]
struct Analysis<'a> {
    headline: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_path: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relevancy: Option<Signal<RelevancySignal<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    visual_veracity: Option<Signal<VisualSignal<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_qa_per_chain: Option<Vec<QaSummary<'a>>>,
}

const UNCERTAIN: &str = "uncertain";

/// Compact analysis JSON. Disabled signals are left out entirely; stages
/// that ran but produced nothing usable appear as `{"status":"uncertain"}`.
pub fn render_analysis_json(input: &JudgeInput) -> String {
    let flags = input.flags;
    let any_image_signal = flags.use_visual || flags.use_alignment;
    let relevancy = flags.use_alignment.then(|| match &input.alignment {
        Some(a) if a.is_ok() => Signal::Present(RelevancySignal {
            aligned: a.aligned.as_str(),
            confidence: a.confidence,
            explanation: &a.explanation,
        }),
        _ => Signal::Uncertain { status: UNCERTAIN },
    });
    let visual_veracity = flags.use_visual.then(|| match &input.visual {
        Some(v) if v.is_ok() => Signal::Present(VisualSignal {
            ai_generated: v.ai_generated,
            confidence: v.confidence,
            anomalies: &v.anomalies,
        }),
        _ => Signal::Uncertain { status: UNCERTAIN },
    });
    let best_qa_per_chain = input.enabled_qa().map(|items| {
        items
            .iter()
            .map(|qa| QaSummary {
                question: &qa.question,
                answer: &qa.answer,
                confidence: qa.confidence,
                citations_count: qa.citations_count(),
            })
            .collect()
    });
    let analysis = Analysis {
        headline: &input.headline,
        image_path: input.image_path.as_deref().filter(|_| any_image_signal),
        relevancy,
        visual_veracity,
        best_qa_per_chain,
    };
    serde_json::to_string(&analysis).expect("analysis serializes")
}

pub fn render_judge_prompt(input: &JudgeInput) -> String {
    render(JUDGE_USER, &[("analysis_json", &render_analysis_json(input))])
}

#[derive(Debug, Deserialize)]
struct JudgeOutput {
    #[serde(deserialize_with = "lenient_label")]
    label: VerdictLabel,
    confidence: Confidence,
    #[serde(default)]
    rationale: String,
    key_factors: Vec<String>,
}

impl StageOutput for JudgeOutput {
    fn check(&self) -> Result<(), String> {
        if self.key_factors.iter().all(|f| f.trim().is_empty()) {
            return Err("key_factors must not be empty".into());
        }
        Ok(())
    }
}

fn lenient_label<'de, D: Deserializer<'de>>(d: D) -> Result<VerdictLabel, D::Error> {
    let raw = String::deserialize(d)?;
    let squashed: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match squashed.as_str() {
        "misinformation" => Ok(VerdictLabel::Misinformation),
        "notmisinformation" => Ok(VerdictLabel::NotMisinformation),
        _ => Err(serde::de::Error::custom(format!(
            "label must be Misinformation or Not Misinformation, got {raw:?}"
        ))),
    }
}

pub fn judge_llm(gateway: &Gateway, input: &JudgeInput, meter: &UsageCounter) -> JudgeVerdict {
    let user = render_judge_prompt(input);
    match gateway.call_structured::<JudgeOutput>(Stage::Judge, JUDGE_SYSTEM, &user, &[], meter) {
        Ok(out) => JudgeVerdict {
            label: out.label,
            confidence: out.confidence,
            rationale: out.rationale,
            key_factors: out.key_factors.into_iter().filter(|f| !f.trim().is_empty()).collect(),
        },
        Err(e) => {
            info!("judge produced no usable verdict: {e}");
            JudgeVerdict::uncertain(format!("judge failed: {e}"))
        }
    }
}

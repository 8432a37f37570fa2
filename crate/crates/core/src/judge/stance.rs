use log::info;
use serde::{Deserialize, Deserializer};

use super::{QaStance, Stance};
use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::model::{Confidence, QAItem};
use crate::prompts::{render, STANCE_SYSTEM, STANCE_USER};

/// Below this, a QA item is not evidence at all.
pub const MIN_EVIDENCE_CONFIDENCE: f64 = 0.3;
/// A Contradicts stance needs at least one answer this confident.
pub const MIN_CONTRADICTING_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Deserialize)]
struct StanceOutput {
    #[serde(deserialize_with = "lenient_stance")]
    stance: Stance,
    confidence: Confidence,
}

impl StageOutput for StanceOutput {}

fn lenient_stance<'de, D: Deserializer<'de>>(d: D) -> Result<Stance, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "supports" | "support" => Ok(Stance::Supports),
        "contradicts" | "contradict" => Ok(Stance::Contradicts),
        "inconclusive" => Ok(Stance::Inconclusive),
        _ => Err(serde::de::Error::custom(format!("unknown stance {raw:?}"))),
    }
}

pub fn render_stance_prompt(best_qa: &[QAItem], headline: &str) -> String {
    let evidence = best_qa
        .iter()
        .map(|qa| {
            format!(
                "[chain {}] Q: {}\nA: {} (confidence {:.2}, {} citations)",
                qa.chain_index.get(),
                qa.question,
                qa.answer,
                qa.confidence.value(),
                qa.citations_count()
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    render(STANCE_USER, &[("headline", headline), ("qa_evidence", &evidence)])
}

/// Classifies the QA evidence against the headline with one extra model
/// call. Missing or uniformly weak evidence is Inconclusive without a call.
pub fn derive_stance(gateway: &Gateway, best_qa: &[QAItem], headline: &str, meter: &UsageCounter) -> QaStance {
    if best_qa.iter().all(|qa| qa.confidence.value() < MIN_EVIDENCE_CONFIDENCE) {
        return QaStance::inconclusive();
    }
    let user = render_stance_prompt(best_qa, headline);
    let out = match gateway.call_structured::<StanceOutput>(Stage::Stance, STANCE_SYSTEM, &user, &[], meter) {
        Ok(out) => out,
        Err(e) => {
            info!("stance classification failed: {e}");
            return QaStance::inconclusive();
        }
    };
    let strongest = best_qa.iter().map(|qa| qa.confidence.value()).fold(0.0, f64::max);
    if out.stance == Stance::Contradicts && strongest < MIN_CONTRADICTING_CONFIDENCE {
        return QaStance::inconclusive();
    }
    QaStance {
        stance: out.stance,
        support_confidence: out.confidence,
    }
}

use super::{JudgeInput, Stance};
use crate::model::{Alignment, Confidence, JudgeVerdict, VerdictLabel};

pub const FALLBACK_CONFIDENCE: f64 = 0.55;
pub const FALLBACK_RATIONALE: &str = "insufficient verification";

/// Partial alignment at or above this confidence counts as genuine relation.
const PARTIAL_QUALIFIES: f64 = 0.7;

fn conf(v: f64) -> Confidence {
    Confidence::new(v.clamp(0.0, 1.0)).expect("clamped")
}

fn misinformation(triggers: Vec<(String, f64)>, rationale: &str) -> JudgeVerdict {
    let top = triggers.iter().map(|(_, c)| *c).fold(0.5, f64::max);
    JudgeVerdict {
        label: VerdictLabel::Misinformation,
        confidence: conf(top),
        rationale: rationale.to_owned(),
        key_factors: triggers.into_iter().map(|(f, _)| f).collect(),
    }
}

/// Deterministic mirror of the judge's three decision steps.
///
/// Disabled signals never trigger STEP 1/2 and are vacuously satisfied in
/// STEP 3. Uncertain stage outputs never trigger and never qualify.
pub fn judge_rules(input: &JudgeInput) -> JudgeVerdict {
    let flags = input.flags;
    let visual = input.enabled_visual().filter(|v| v.is_ok());
    let alignment = input.enabled_alignment().filter(|a| a.is_ok());
    let stance = input.stance.unwrap_or_else(super::QaStance::inconclusive);

    // STEP 1
    let mut triggers = Vec::new();
    if flags.use_qa && stance.stance == Stance::Contradicts {
        let c = stance.support_confidence.value();
        triggers.push((format!("qa: contradicts ({c:.2})"), c));
    }
    if let Some(v) = visual.filter(|v| v.flags_ai_generated()) {
        let c = v.confidence.value();
        triggers.push((format!("visual: ai_generated ({c:.2})"), c));
    }
    if let Some(a) = alignment.filter(|a| a.aligned == Alignment::False) {
        let c = a.confidence.value();
        triggers.push((format!("relevancy: false ({c:.2})"), c));
    }
    if !triggers.is_empty() {
        return misinformation(triggers, "definitive misinformation signal");
    }

    // STEP 2
    if let Some(a) = alignment.filter(|a| a.aligned == Alignment::Partial && a.confidence.value() < PARTIAL_QUALIFIES) {
        let c = a.confidence.value();
        return misinformation(
            vec![(format!("relevancy: partial ({c:.2})"), c)],
            "low-confidence partial alignment suggests a mismatched image",
        );
    }

    // STEP 3
    let mut qualifying: Vec<(String, f64)> = Vec::new();
    let mut unmet: Vec<String> = Vec::new();
    if flags.use_qa {
        if stance.stance == Stance::Supports {
            let c = stance.support_confidence.value();
            qualifying.push((format!("qa: supports ({c:.2})"), c));
        } else {
            unmet.push(format!("qa: {}", stance.stance.as_str()));
        }
    }
    if flags.use_alignment {
        match alignment {
            Some(a)
                if a.aligned == Alignment::True
                    || (a.aligned == Alignment::Partial && a.confidence.value() >= PARTIAL_QUALIFIES) =>
            {
                let c = a.confidence.value();
                qualifying.push((format!("relevancy: {} ({c:.2})", a.aligned.as_str()), c));
            }
            Some(a) => unmet.push(format!("relevancy: {}", a.aligned.as_str())),
            None => unmet.push("relevancy: uncertain".to_owned()),
        }
    }
    if flags.use_visual {
        match visual {
            Some(v) if !v.flags_ai_generated() => {
                let c = v.confidence.value();
                qualifying.push((format!("visual: genuine ({c:.2})"), 1.0 - c));
            }
            Some(_) => unmet.push("visual: ai_generated".to_owned()),
            None => unmet.push("visual: uncertain".to_owned()),
        }
    }

    if unmet.is_empty() {
        let confidence = qualifying.iter().map(|(_, c)| *c).reduce(f64::min).unwrap_or(0.5);
        let mut key_factors: Vec<String> = qualifying.into_iter().map(|(f, _)| f).collect();
        if key_factors.is_empty() {
            key_factors.push("judge: no verification signals enabled".to_owned());
        }
        return JudgeVerdict {
            label: VerdictLabel::NotMisinformation,
            confidence: conf(confidence),
            rationale: "headline supported, image relates to it and appears authentic".to_owned(),
            key_factors,
        };
    }

    let mut key_factors = vec![format!("judge: {FALLBACK_RATIONALE}")];
    key_factors.extend(unmet);
    JudgeVerdict {
        label: VerdictLabel::Misinformation,
        confidence: conf(FALLBACK_CONFIDENCE),
        rationale: FALLBACK_RATIONALE.to_owned(),
        key_factors,
    }
}

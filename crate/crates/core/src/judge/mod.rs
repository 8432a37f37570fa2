//! Stage 4: combine the visual, alignment and QA signals into a verdict.
//!
//! Two judges share one input type: [`judge_llm`] asks the model with the
//! decision-rule prompt, and [`judge_rules`] applies the same decision steps
//! deterministically (used for audits, ablations and as the test oracle).

mod llm;
mod rules;
mod stance;

use serde::{Deserialize, Serialize};

pub use llm::{judge_llm, render_analysis_json, render_judge_prompt};
pub use rules::{judge_rules, FALLBACK_CONFIDENCE, FALLBACK_RATIONALE};
pub use stance::{derive_stance, render_stance_prompt, MIN_CONTRADICTING_CONFIDENCE, MIN_EVIDENCE_CONFIDENCE};

use crate::backend::{Gateway, UsageCounter};
use crate::model::{AlignmentVerdict, Confidence, JudgeVerdict, QAItem, VisualVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Llm,
    Rules,
}

/// Which signals the judge may look at (ablation switches).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalFlags {
    pub use_visual: bool,
    pub use_alignment: bool,
    pub use_qa: bool,
}

impl SignalFlags {
    pub const ALL: SignalFlags = SignalFlags {
        use_visual: true,
        use_alignment: true,
        use_qa: true,
    };
    pub const NONE: SignalFlags = SignalFlags {
        use_visual: false,
        use_alignment: false,
        use_qa: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Supports,
    Contradicts,
    Inconclusive,
}

impl Stance {
    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Supports => "supports",
            Stance::Contradicts => "contradicts",
            Stance::Inconclusive => "inconclusive",
        }
    }
}

/// Aggregate position of the QA evidence toward the headline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaStance {
    pub stance: Stance,
    pub support_confidence: Confidence,
}

impl QaStance {
    pub fn inconclusive() -> Self {
        QaStance {
            stance: Stance::Inconclusive,
            support_confidence: Confidence::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeInput {
    pub headline: String,
    pub image_path: Option<String>,
    pub visual: Option<VisualVerdict>,
    pub alignment: Option<AlignmentVerdict>,
    pub best_qa: Vec<QAItem>,
    /// Only consulted by the rules engine.
    pub stance: Option<QaStance>,
    pub flags: SignalFlags,
}

impl JudgeInput {
    pub fn enabled_visual(&self) -> Option<&VisualVerdict> {
        self.visual.as_ref().filter(|_| self.flags.use_visual)
    }

    pub fn enabled_alignment(&self) -> Option<&AlignmentVerdict> {
        self.alignment.as_ref().filter(|_| self.flags.use_alignment)
    }

    pub fn enabled_qa(&self) -> Option<&[QAItem]> {
        self.flags.use_qa.then_some(self.best_qa.as_slice())
    }
}

pub fn judge(kind: JudgeKind, gateway: &Gateway, input: &JudgeInput, meter: &UsageCounter) -> JudgeVerdict {
    match kind {
        JudgeKind::Llm => judge_llm(gateway, input, meter),
        JudgeKind::Rules => judge_rules(input),
    }
}

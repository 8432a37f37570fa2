use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::Scored;
use crate::model::{GoldLabel, VerdictLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorBucket {
    AlignmentDriven,
    VisualDriven,
    QaDriven,
    JudgeFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketEntry {
    pub count: u64,
    pub false_positives: Vec<String>,
    pub false_negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub buckets: BTreeMap<ErrorBucket, BucketEntry>,
}

impl ErrorBreakdown {
    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.buckets.values().map(|b| b.count).sum()
    }
}

fn classify_factor(factor: &str) -> Option<ErrorBucket> {
    let f = factor.trim().to_ascii_lowercase();
    let head = f.split(':').next().unwrap_or("").trim();
    let by_head = match head {
        "relevancy" | "alignment" => Some(ErrorBucket::AlignmentDriven),
        "visual" => Some(ErrorBucket::VisualDriven),
        "qa" | "claims" => Some(ErrorBucket::QaDriven),
        "judge" => Some(ErrorBucket::JudgeFallback),
        _ => None,
    };
    by_head.or_else(|| {
        const ALIGNMENT: [&str; 4] = ["relevancy", "alignment", "aligned", "mismatch"];
        const VISUAL: [&str; 4] = ["ai-generated", "ai_generated", "ai generated", "visual"];
        const QA: [&str; 5] = ["qa", "evidence", "source", "search", "claim"];
        if ALIGNMENT.iter().any(|k| f.contains(k)) {
            Some(ErrorBucket::AlignmentDriven)
        } else if VISUAL.iter().any(|k| f.contains(k)) {
            Some(ErrorBucket::VisualDriven)
        } else if QA
            .iter()
            .any(|k| f.split(|c: char| !c.is_alphanumeric()).any(|w| w.starts_with(k)))
        {
            Some(ErrorBucket::QaDriven)
        } else {
            None
        }
    })
}

/// The bucket of the first key factor that names a signal. Uncertain
/// verdicts and verdicts with no recognizable factor go to the fallback.
pub fn dominant_signal(label: VerdictLabel, key_factors: &[String]) -> ErrorBucket {
    if label == VerdictLabel::Uncertain {
        return ErrorBucket::JudgeFallback;
    }
    key_factors
        .iter()
        .find_map(|f| classify_factor(f))
        .unwrap_or(ErrorBucket::JudgeFallback)
}

/// Groups misclassified samples by the signal that drove the verdict.
pub fn error_breakdown(samples: &[Scored]) -> ErrorBreakdown {
    let mut out = ErrorBreakdown::default();
    for s in samples.iter().filter(|s| !s.is_correct()) {
        let entry = out.buckets.entry(dominant_signal(s.label, &s.key_factors)).or_default();
        entry.count += 1;
        match s.gold {
            GoldLabel::NotMisinformation => entry.false_positives.push(s.id.clone()),
            GoldLabel::Misinformation => entry.false_negatives.push(s.id.clone()),
        }
    }
    out
}

//! Domain types shared by every pipeline stage.
//!
//! Every type here is an immutable value object with a canonical JSON form
//! (snake_case field names). Those JSON forms are what end up inside the
//! per-sample report files.

use std::fmt;
use std::path::PathBuf;

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("headline must not be empty")]
    EmptyHeadline,
    #[error("citation url must not be empty")]
    EmptyCitationUrl,
    #[error("chain index {0} is outside 1..=3")]
    ChainIndexOutOfRange(u8),
    #[error("category authentic requires gold label not_misinformation")]
    AuthenticMislabelled,
    #[error("no probability for uncertain verdicts")]
    UncertainVerdict,
}

/// A probability-like score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub const ZERO: Confidence = Confidence(0.0);
    pub const ONE: Confidence = Confidence(1.0);

    pub fn new(value: f64) -> Result<Self, ModelError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Confidence(value))
        } else {
            Err(ModelError::ConfidenceOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - self`.
    pub fn complement(self) -> Confidence {
        Confidence(1.0 - self.0)
    }
}

impl TryFrom<f64> for Confidence {
    type Error = ModelError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Confidence::new(value)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldLabel {
    Misinformation,
    NotMisinformation,
}

impl GoldLabel {
    pub fn is_positive(self) -> bool {
        self == GoldLabel::Misinformation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TextualDistortion,
    VisualDistortion,
    CrossModalMismatch,
    Authentic,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::VisualDistortion,
        Category::TextualDistortion,
        Category::CrossModalMismatch,
        Category::Authentic,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Category::VisualDistortion => "Visual distortion",
            Category::TextualDistortion => "Textual distortion",
            Category::CrossModalMismatch => "Cross-modal mismatch",
            Category::Authentic => "Authentic content",
        }
    }
}

/// Where a sample's image comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Path(PathBuf),
    Bytes(#[serde(with = "base64_bytes")] Vec<u8>),
}

impl ImageRef {
    /// Short description used in prompts and reports.
    pub fn describe(&self) -> String {
        match self {
            ImageRef::Path(p) => p.display().to_string(),
            ImageRef::Bytes(b) => format!("<inline {} bytes>", b.len()),
        }
    }
}

mod base64_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image_ref: ImageRef,
    pub headline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<GoldLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image_ref: ImageRef, headline: impl Into<String>) -> Result<Self, ModelError> {
        let sample = Sample {
            id: id.into(),
            image_ref,
            headline: headline.into(),
            gold_label: None,
            category: None,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn with_gold(mut self, label: GoldLabel, category: Category) -> Result<Self, ModelError> {
        self.gold_label = Some(label);
        self.category = Some(category);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.headline.trim().is_empty() {
            return Err(ModelError::EmptyHeadline);
        }
        if let (Some(Category::Authentic), Some(GoldLabel::Misinformation)) = (self.category, self.gold_label) {
            return Err(ModelError::AuthenticMislabelled);
        }
        Ok(())
    }
}

/// Whether a stage produced usable output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Ok,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualVerdict {
    pub ai_generated: bool,
    pub confidence: Confidence,
    pub explanation: String,
    #[serde(default)]
    pub anomalies: Vec<String>,
    #[serde(default)]
    pub status: StageStatus,
}

impl VisualVerdict {
    pub fn uncertain(reason: impl Into<String>) -> Self {
        VisualVerdict {
            ai_generated: false,
            confidence: Confidence::ZERO,
            explanation: reason.into(),
            anomalies: Vec::new(),
            status: StageStatus::Uncertain,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == StageStatus::Ok
    }

    /// The STEP-1 visual trigger: flagged as AI-generated with confidence strictly above 0.6.
    pub fn flags_ai_generated(&self) -> bool {
        self.is_ok() && self.ai_generated && self.confidence.value() > 0.6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    True,
    Partial,
    False,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::True => "true",
            Alignment::Partial => "partial",
            Alignment::False => "false",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentVerdict {
    pub aligned: Alignment,
    pub confidence: Confidence,
    pub explanation: String,
    #[serde(default)]
    pub status: StageStatus,
}

impl AlignmentVerdict {
    pub fn uncertain(reason: impl Into<String>) -> Self {
        AlignmentVerdict {
            aligned: Alignment::Partial,
            confidence: Confidence::ZERO,
            explanation: reason.into(),
            status: StageStatus::Uncertain,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == StageStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCitation")]
pub struct Citation {
    pub url: String,
    #[serde(default)]
    pub title: String,
}

#[derive(Deserialize)]
struct RawCitation {
    url: String,
    #[serde(default)]
    title: String,
}

impl TryFrom<RawCitation> for Citation {
    type Error = ModelError;
    fn try_from(raw: RawCitation) -> Result<Self, Self::Error> {
        Citation::new(raw.url, raw.title)
    }
}

impl Citation {
    pub fn new(url: impl Into<String>, title: impl Into<String>) -> Result<Self, ModelError> {
        let url = url.into();
        if url.trim().is_empty() {
            return Err(ModelError::EmptyCitationUrl);
        }
        Ok(Citation {
            url,
            title: title.into(),
        })
    }
}

/// Index of a question chain, 1 through 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ChainIndex(u8);

impl ChainIndex {
    pub const MAX: u8 = 3;

    pub fn new(index: u8) -> Result<Self, ModelError> {
        if (1..=Self::MAX).contains(&index) {
            Ok(ChainIndex(index))
        } else {
            Err(ModelError::ChainIndexOutOfRange(index))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for ChainIndex {
    type Error = ModelError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ChainIndex::new(v)
    }
}

impl From<ChainIndex> for u8 {
    fn from(c: ChainIndex) -> u8 {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub question: String,
    pub answer: String,
    pub citations: Vec<Citation>,
    pub confidence: Confidence,
    pub rationale: String,
    pub chain_index: ChainIndex,
}

impl QAItem {
    pub fn citations_count(&self) -> usize {
        self.citations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClaimEvidence {
    pub all_qa: Vec<QAItem>,
    pub best_per_chain: Vec<QAItem>,
    /// Normalized, de-duplicated queries in issue order.
    pub queries_issued: Vec<String>,
    /// Normalized queries whose retrieval failed after all retries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieval_failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Misinformation,
    NotMisinformation,
    Uncertain,
}

impl VerdictLabel {
    /// Whether this prediction counts as correct against `gold`. Uncertain never does.
    pub fn matches(self, gold: GoldLabel) -> bool {
        matches!(
            (self, gold),
            (VerdictLabel::Misinformation, GoldLabel::Misinformation)
                | (VerdictLabel::NotMisinformation, GoldLabel::NotMisinformation)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub label: VerdictLabel,
    pub confidence: Confidence,
    pub rationale: String,
    pub key_factors: Vec<String>,
}

impl JudgeVerdict {
    pub fn uncertain(reason: impl Into<String>) -> Self {
        JudgeVerdict {
            label: VerdictLabel::Uncertain,
            confidence: Confidence::ZERO,
            rationale: reason.into(),
            key_factors: Vec::new(),
        }
    }

    /// Same confidence, opposite class. Uncertain stays uncertain.
    pub fn flip_label(&self) -> JudgeVerdict {
        let label = match self.label {
            VerdictLabel::Misinformation => VerdictLabel::NotMisinformation,
            VerdictLabel::NotMisinformation => VerdictLabel::Misinformation,
            VerdictLabel::Uncertain => VerdictLabel::Uncertain,
        };
        JudgeVerdict { label, ..self.clone() }
    }
}

/// Maps a verdict (confidence in its own label) onto P(misinformation).
pub fn probability_of_misinfo(verdict: &JudgeVerdict) -> Result<f64, ModelError> {
    match verdict.label {
        VerdictLabel::Misinformation => Ok(verdict.confidence.value()),
        VerdictLabel::NotMisinformation => Ok(1.0 - verdict.confidence.value()),
        VerdictLabel::Uncertain => Err(ModelError::UncertainVerdict),
    }
}

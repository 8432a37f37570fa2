//! Stage 2: does the image depict the headline's specific subject?
//!
//! This stage only reports the three-level alignment and its confidence.
//! The 0.7 partial-alignment threshold belongs to the judge.

use log::info;
use serde::{Deserialize, Deserializer};

use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::image_input::{encode_image, EncodedImage, InputError};
use crate::model::{Alignment, AlignmentVerdict, Confidence, ImageRef, StageStatus};
use crate::prompts::{render, RELEVANCY_SYSTEM, RELEVANCY_USER};

#[derive(Debug, Deserialize)]
struct AlignmentOutput {
    #[serde(deserialize_with = "lenient_alignment")]
    aligned: Alignment,
    confidence: Confidence,
    #[serde(default)]
    explanation: String,
}

impl StageOutput for AlignmentOutput {}

// Accepts "true" | "partial" | "false" in any case, and bare JSON booleans.
fn lenient_alignment<'de, D: Deserializer<'de>>(d: D) -> Result<Alignment, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Bool(true) => Ok(Alignment::True),
        Raw::Bool(false) => Ok(Alignment::False),
        Raw::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Alignment::True),
            "partial" => Ok(Alignment::Partial),
            "false" => Ok(Alignment::False),
            other => Err(serde::de::Error::custom(format!(
                "aligned must be true|partial|false, got {other:?}"
            ))),
        },
    }
}

pub fn render_user_prompt(headline: &str) -> String {
    render(RELEVANCY_USER, &[("headline", headline)])
}

pub fn assess_encoded(
    gateway: &Gateway,
    image: &EncodedImage,
    headline: &str,
    meter: &UsageCounter,
) -> AlignmentVerdict {
    let user = render_user_prompt(headline);
    let images = [image.base64.clone()];
    match gateway.call_structured::<AlignmentOutput>(Stage::Relevancy, RELEVANCY_SYSTEM, &user, &images, meter) {
        Ok(out) => AlignmentVerdict {
            aligned: out.aligned,
            confidence: out.confidence,
            explanation: out.explanation,
            status: StageStatus::Ok,
        },
        Err(e) => {
            info!("relevancy uncertain for {}: {e}", image.source);
            AlignmentVerdict::uncertain(e.to_string())
        }
    }
}

pub fn assess_alignment(
    gateway: &Gateway,
    image_ref: &ImageRef,
    headline: &str,
    meter: &UsageCounter,
) -> Result<AlignmentVerdict, InputError> {
    let image = encode_image(image_ref)?;
    Ok(assess_encoded(gateway, &image, headline, meter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{extract_strict_json, prompt_hash, ExtractError, MockBackend, REPAIR_REMINDER};
    use std::sync::Arc;

    const HEADLINE: &str = "Whale beached near Cape Cod";

    fn image() -> EncodedImage {
        EncodedImage {
            base64: "QUJD".into(),
            source: "t.png".into(),
            width: 1,
            height: 1,
        }
    }

    fn run(first: &str, second: Option<&str>) -> (AlignmentVerdict, Gateway) {
        let mut mock = MockBackend::new();
        let user = render_user_prompt(HEADLINE);
        let images = ["QUJD".to_string()];
        mock.insert(Stage::Relevancy, prompt_hash(&user, &images), first);
        if let Some(s) = second {
            mock.insert(
                Stage::Relevancy,
                prompt_hash(&format!("{user}{REPAIR_REMINDER}"), &images),
                s,
            );
        }
        let gw = Gateway::new(Arc::new(mock), "m");
        let v = assess_encoded(&gw, &image(), HEADLINE, &UsageCounter::new());
        (v, gw)
    }

    #[test]
    fn partial_alignment() {
        let (v, _) = run(
            r#"{"aligned":"partial","confidence":0.8,"explanation":"right subject, details not visible"}"#,
            None,
        );
        assert_eq!(v.aligned, Alignment::Partial);
        assert_eq!(v.confidence.value(), 0.8);
        assert!(v.is_ok());
    }

    #[test]
    fn false_alignment() {
        let (v, _) = run(
            r#"{"aligned":"false","confidence":0.9,"explanation":"different event"}"#,
            None,
        );
        assert_eq!(v.aligned, Alignment::False);
        assert_eq!(v.confidence.value(), 0.9);
    }

    #[test]
    fn out_of_enum_value_is_schema_error_then_uncertain() {
        let bad = r#"{"aligned":"maybe","confidence":0.5,"explanation":"?"}"#;
        assert!(matches!(
            extract_strict_json::<AlignmentOutput>(bad),
            Err(ExtractError::Schema(_))
        ));
        let (v, gw) = run(bad, Some(bad));
        assert_eq!(v.status, StageStatus::Uncertain);
        assert_eq!(gw.calls_for(Stage::Relevancy), 2);
    }

    #[test]
    fn accepts_boolean_alignment() {
        let out: AlignmentOutput = extract_strict_json(r#"{"aligned":true,"confidence":1.0}"#).unwrap();
        assert_eq!(out.aligned, Alignment::True);
    }

    #[test]
    fn prompt_snapshot() {
        let p = render_user_prompt(HEADLINE);
        assert!(p.starts_with("Headline: Whale beached near Cape Cod\n\nTask: Does the image"));
        assert!(p.contains("High confidence (0.7+): Right subject"));
        assert!(p.contains("Low confidence (<0.7): Possibly wrong subject"));
        assert!(RELEVANCY_SYSTEM.ends_with("Respond with strict JSON only.\n"));
    }
}

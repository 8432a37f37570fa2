//! Stage 1: does the image show signs of AI generation or manipulation?

use log::info;
use serde::Deserialize;

use crate::backend::{Gateway, Stage, StageOutput, UsageCounter};
use crate::image_input::{encode_image, EncodedImage, InputError};
use crate::model::{Confidence, ImageRef, StageStatus, VisualVerdict};
use crate::prompts::{VISUAL_SYSTEM, VISUAL_USER};

#[derive(Debug, Deserialize)]
struct VisualOutput {
    ai_generated: bool,
    confidence: Confidence,
    #[serde(default)]
    explanation: String,
    #[serde(default)]
    anomalies: Vec<String>,
}

impl StageOutput for VisualOutput {}

/// Runs the visual check on an already-encoded image. Never fails: backend
/// or parse exhaustion yields an `Uncertain` verdict.
pub fn verify_encoded(gateway: &Gateway, image: &EncodedImage, meter: &UsageCounter) -> VisualVerdict {
    let images = [image.base64.clone()];
    match gateway.call_structured::<VisualOutput>(Stage::Visual, VISUAL_SYSTEM, VISUAL_USER, &images, meter) {
        Ok(out) => VisualVerdict {
            ai_generated: out.ai_generated,
            confidence: out.confidence,
            explanation: out.explanation,
            anomalies: out.anomalies,
            status: StageStatus::Ok,
        },
        Err(e) => {
            info!("visual verification uncertain for {}: {e}", image.source);
            VisualVerdict::uncertain(e.to_string())
        }
    }
}

/// Loads, normalizes and checks `image_ref`.
pub fn verify_image(
    gateway: &Gateway,
    image_ref: &ImageRef,
    meter: &UsageCounter,
) -> Result<VisualVerdict, InputError> {
    let image = encode_image(image_ref)?;
    Ok(verify_encoded(gateway, &image, meter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, REPAIR_REMINDER};
    use std::sync::Arc;

    fn image() -> EncodedImage {
        EncodedImage {
            base64: "QUJD".into(),
            source: "t.png".into(),
            width: 1,
            height: 1,
        }
    }

    fn gateway(responses: &[&str]) -> Gateway {
        let mut mock = MockBackend::new();
        let hash = |p: &str| crate::backend::prompt_hash(p, &["QUJD".to_string()]);
        mock.insert(Stage::Visual, hash(VISUAL_USER), responses[0]);
        if let Some(second) = responses.get(1) {
            mock.insert(Stage::Visual, hash(&format!("{VISUAL_USER}{REPAIR_REMINDER}")), *second);
        }
        Gateway::new(Arc::new(mock), "m")
    }

    #[test]
    fn parses_ai_generated_verdict() {
        let gw = gateway(&[
            r#"{"ai_generated":true,"confidence":0.9,"explanation":"warped hands","anomalies":["extra fingers"]}"#,
        ]);
        let v = verify_encoded(&gw, &image(), &UsageCounter::new());
        assert!(v.ai_generated && v.is_ok());
        assert_eq!(v.confidence.value(), 0.9);
        assert_eq!(v.anomalies, vec!["extra fingers".to_string()]);
    }

    #[test]
    fn parses_genuine_verdict_without_anomalies() {
        let gw = gateway(&[r#"{"ai_generated":false,"confidence":0.1,"explanation":"looks real"}"#]);
        let v = verify_encoded(&gw, &image(), &UsageCounter::new());
        assert!(!v.ai_generated);
        assert_eq!(v.confidence.value(), 0.1);
        assert_eq!(v.status, StageStatus::Ok);
    }

    #[test]
    fn garbage_twice_degrades_to_uncertain() {
        let gw = gateway(&["garbage", "garbage"]);
        let v = verify_encoded(&gw, &image(), &UsageCounter::new());
        assert_eq!(v.status, StageStatus::Uncertain);
        assert_eq!(gw.calls_for(Stage::Visual), 2);
    }

    #[test]
    fn missing_fixture_degrades_to_uncertain() {
        let gw = Gateway::new(Arc::new(MockBackend::new()), "m");
        assert_eq!(
            verify_encoded(&gw, &image(), &UsageCounter::new()).status,
            StageStatus::Uncertain
        );
    }

    #[test]
    fn unreadable_image_is_input_error() {
        let gw = Gateway::new(Arc::new(MockBackend::new()), "m");
        let r = verify_image(&gw, &ImageRef::Path("/no/such.png".into()), &UsageCounter::new());
        assert!(r.is_err());
        assert_eq!(gw.calls_for(Stage::Visual), 0);
    }

    #[test]
    fn prompt_snapshot() {
        assert!(VISUAL_USER.contains("0.8-1.0: Clear technical artifacts"));
        assert!(VISUAL_USER.contains("- 0.0-0.2: Appears genuine\n"));
        assert!(VISUAL_USER.contains("- Warped hands, extra fingers, impossible anatomy\n"));
        assert_eq!(
            VISUAL_SYSTEM,
            "You are an AI image detection expert. Analyze \nimages for signs of AI generation or manipulation.\nRespond with strict JSON only.\n"
        );
    }
}

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no parseable JSON in model output: {0}")]
    Parse(String),
    #[error("model output does not match the expected schema: {0}")]
    Schema(String),
}

/// A typed model output. Deserialization is the structural schema;
/// `check` adds value-level constraints serde cannot express.
pub trait StageOutput: DeserializeOwned {
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl StageOutput for Value {}

/// Finds the first top-level JSON object or array in `raw`, ignoring
/// surrounding prose and markdown code fences.
pub fn extract_json(raw: &str) -> Result<Value, ExtractError> {
    let text = strip_fences(raw);
    for (start, ch) in text.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            return Ok(value);
        }
    }
    Err(ExtractError::Parse(preview(raw)))
}

/// [`extract_json`] followed by schema validation into `T`.
pub fn extract_strict_json<T: StageOutput>(raw: &str) -> Result<T, ExtractError> {
    let value = extract_json(raw)?;
    let parsed: T = serde_json::from_value(value).map_err(|e| ExtractError::Schema(e.to_string()))?;
    parsed.check().map_err(ExtractError::Schema)?;
    Ok(parsed)
}

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // drop the info string ("json") on the opening fence line
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    match body.rfind("```") {
        Some(end) => &body[..end],
        None => body,
    }
}

fn preview(raw: &str) -> String {
    const MAX: usize = 80;
    let mut s: String = raw.chars().take(MAX).collect();
    if raw.chars().count() > MAX {
        s.push_str("...");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[test]
    fn strips_code_fences() {
        assert_eq!(extract_json("```json\n{\"a\":1}\n```").unwrap(), json!({"a": 1}));
        assert_eq!(extract_json("```\n[1,2]\n```").unwrap(), json!([1, 2]));
    }

    #[test]
    fn skips_prose_and_trailing_text() {
        let raw = "Sure! Here is the result [see below]: {\"x\": [1]} hope it helps {";
        assert_eq!(extract_json(raw).unwrap(), json!({"x": [1]}));
    }

    #[test]
    fn no_json_is_parse_error() {
        assert!(matches!(extract_json("no json here"), Err(ExtractError::Parse(_))));
        assert!(matches!(extract_json("{broken"), Err(ExtractError::Parse(_))));
    }

    #[derive(Debug, Deserialize)]
    struct Bounded {
        n: i64,
    }

    impl StageOutput for Bounded {
        fn check(&self) -> Result<(), String> {
            if self.n > 10 {
                Err("n too large".into())
            } else {
                Ok(())
            }
        }
    }

    #[test]
    fn schema_mismatch_is_schema_error() {
        assert_eq!(extract_strict_json::<Bounded>("{\"n\": 3}").unwrap().n, 3);
        assert!(matches!(
            extract_strict_json::<Bounded>("{\"m\": 3}"),
            Err(ExtractError::Schema(_))
        ));
        assert!(matches!(
            extract_strict_json::<Bounded>("{\"n\": 30}"),
            Err(ExtractError::Schema(_))
        ));
    }
}

//! Lenient extraction of the 5W1H JSON object from model output.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::llm::LlmError;

/// Structured reasoning record for one post.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiveW1H {
    pub what: String,
    pub who: String,
    pub r#where: String,
    pub when: String,
    pub how: String,
    pub why: String,
    pub claim: String,
}

/// Key order of the serialized record.
pub const KEYS: [&str; 7] = ["what", "who", "where", "when", "how", "why", "claim"];

const CLAIM_MIN_WORDS: usize = 10;
const CLAIM_MAX_WORDS: usize = 15;

impl FiveW1H {
    /// Pretty JSON with two-space indentation, keys in prompt order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain string fields serialize")
    }

    /// Whether the claim falls outside the 10-15 word target the prompt
    /// requests. Advisory only.
    pub fn claim_length_warning(&self) -> Option<usize> {
        let n = self.claim.split_whitespace().count();
        (!(CLAIM_MIN_WORDS..=CLAIM_MAX_WORDS).contains(&n)).then_some(n)
    }
}

/// Find the first balanced `{...}` span that parses as a JSON object.
///
/// Surrounding prose and Markdown code fences are ignored.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(offset) = raw[from..].find('{') {
        let start = from + offset;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&raw[start..=end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}

/// Index of the `}` closing the object opened at `start`, honouring strings
/// and escapes.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn coerce(value: Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s,
        Value::Array(items) => items
            .into_iter()
            .map(coerce)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(", "),
        other => other.to_string(),
    }
}

fn take_claim(object: &mut Map<String, Value>) -> Result<String, LlmError> {
    let claim = object
        .remove("claim")
        .map(coerce)
        .ok_or_else(|| LlmError::Schema("claim".into()))?;
    if claim.trim().is_empty() {
        return Err(LlmError::Schema("claim".into()));
    }
    Ok(claim)
}

/// Parse a 5W1H answer.
///
/// The claim key is checked first, then the six reasoning keys in order.
/// Non-string values are coerced to strings and `null` becomes `""`.
pub fn parse_5w1h_response(raw: &str) -> Result<FiveW1H, LlmError> {
    let mut object = extract_json_object(raw).ok_or_else(|| LlmError::Parse(snippet(raw)))?;
    let claim = take_claim(&mut object)?;
    let mut field = |key: &str| {
        object
            .remove(key)
            .map(coerce)
            .ok_or_else(|| LlmError::Schema(key.to_string()))
    };
    Ok(FiveW1H {
        what: field("what")?,
        who: field("who")?,
        r#where: field("where")?,
        when: field("when")?,
        how: field("how")?,
        why: field("why")?,
        claim,
    })
}

/// Parse a claim-only answer.
pub fn parse_claim_response(raw: &str) -> Result<String, LlmError> {
    let mut object = extract_json_object(raw).ok_or_else(|| LlmError::Parse(snippet(raw)))?;
    take_claim(&mut object)
}

fn snippet(raw: &str) -> String {
    let mut s: String = raw.chars().take(80).collect();
    if s.len() < raw.len() {
        s.push('…');
    }
    s
}

//! Locating JSON values embedded in free-form model output.

use serde_json::Value;

/// Returns every top-level balanced `open`..`close` span in `text` that parses
/// as JSON, in order of appearance. Braces inside string literals are skipped.
fn balanced_values(text: &str, open: u8, close: u8) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(offset) = bytes[start..].iter().position(|&b| b == open) else {
            break;
        };
        let begin = start + offset;
        match balanced_end(bytes, begin, open, close) {
            Some(end) => {
                if let Ok(value) = serde_json::from_str::<Value>(&text[begin..=end]) {
                    found.push(value);
                    start = end + 1;
                    continue;
                }
                start = begin + 1;
            }
            None => start = begin + 1,
        }
    }
    found
}

fn balanced_end(bytes: &[u8], begin: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(begin) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        if b == b'"' {
            in_string = true;
        } else if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// The last balanced JSON object in `text`.
pub(crate) fn last_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    balanced_values(text, b'{', b'}')
        .into_iter()
        .rev()
        .find_map(|v| match v {
            Value::Object(map) => Some(map),
            _ => None,
        })
}

/// The last balanced JSON array in `text`.
pub(crate) fn last_array(text: &str) -> Option<Vec<Value>> {
    balanced_values(text, b'[', b']')
        .into_iter()
        .rev()
        .find_map(|v| match v {
            Value::Array(items) => Some(items),
            _ => None,
        })
}

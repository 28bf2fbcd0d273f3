//! Recovering a JSON value from model output that wraps it in prose or
//! markdown fences.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no parseable JSON object or array in model output")]
pub struct Unparseable;

/// Returns the first balanced top-level object or array that parses. A fenced
/// code block is searched first when present.
pub fn repair_json(raw: &str) -> Result<Value, Unparseable> {
    if let Some(inner) = fenced_block(raw) {
        if let Some(value) = first_balanced(inner) {
            return Ok(value);
        }
    }
    first_balanced(raw).ok_or(Unparseable)
}

/// Contents of the first ``` fenced block, without the language tag.
fn fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map_or(0, |nl| nl + 1);
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

fn first_balanced(text: &str) -> Option<Value> {
    let mut from = 0;
    while let Some(offset) = text[from..].find(['{', '[']) {
        let start = from + offset;
        if let Some(end) = balanced_end(&text[start..]) {
            if let Ok(value) = serde_json::from_str(&text[start..start + end]) {
                return Some(value);
            }
        }
        from = start + 1;
    }
    None
}

/// Byte length of the bracketed region starting at `text[0]`, honouring
/// string literals and escapes.
fn balanced_end(text: &str) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn prose_prefix() {
        assert_eq!(repair_json(r#"Here you go: {"a":1}"#), Ok(json!({"a": 1})));
    }

    #[test]
    fn fenced() {
        assert_eq!(repair_json("```json\n{\"a\":1}\n```"), Ok(json!({"a": 1})));
        assert_eq!(
            repair_json("Sure!\n```\n[1, 2]\n```\nAnything else?"),
            Ok(json!([1, 2]))
        );
    }

    #[test]
    fn first_of_two() {
        assert_eq!(repair_json(r#"{"a":1}{"b":2}"#), Ok(json!({"a": 1})));
    }

    #[test]
    fn braces_inside_strings() {
        assert_eq!(
            repair_json(r#"x {"a":"}{ \" ]"} y"#),
            Ok(json!({"a": "}{ \" ]"}))
        );
    }

    #[test]
    fn skips_unparseable_brackets() {
        assert_eq!(repair_json(r#"[see note] {"a":1}"#), Ok(json!({"a": 1})));
    }

    #[test]
    fn failures() {
        assert_eq!(repair_json("no json here"), Err(Unparseable));
        assert_eq!(repair_json(r#"{"a":1"#), Err(Unparseable));
        assert_eq!(repair_json(""), Err(Unparseable));
    }
}

//! Helpers for reading model replies.

use serde_json::Value;

/// First JSON object or array embedded in `text`, tolerating code fences
/// and surrounding prose.
pub fn extract_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        if v.is_object() || v.is_array() {
            return Some(v);
        }
    }
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            return Some(v);
        }
    }
    None
}

/// Value following `KEY:` at the start of a line (case-insensitive), with
/// any continuation lines up to the next `KEY:` line.
pub fn labeled_field(text: &str, key: &str, all_keys: &[&str]) -> Option<String> {
    let is_key_line = |line: &str, k: &str| {
        let l = line.trim_start();
        l.get(..k.len()).is_some_and(|p| p.eq_ignore_ascii_case(k)) && l[k.len()..].starts_with(':')
    };
    let mut lines = text.lines();
    let first = lines.by_ref().find(|l| is_key_line(l, key))?;
    let mut value = first.trim_start()[key.len() + 1..].trim().to_string();
    for line in lines {
        if all_keys.iter().any(|k| is_key_line(line, k)) {
            break;
        }
        if !line.trim().is_empty() {
            if !value.is_empty() {
                value.push(' ');
            }
            value.push_str(line.trim());
        }
    }
    Some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_json_in_prose_and_fences() {
        assert_eq!(extract_json("{\"a\": 1}").unwrap()["a"], 1);
        assert_eq!(extract_json("Sure!\n```json\n{\"a\": [1, 2]}\n```").unwrap()["a"][1], 2);
        assert_eq!(extract_json("list: [\"x\", \"y\"] done").unwrap()[0], "x");
        assert_eq!(extract_json("a {broken then {\"ok\": true}").unwrap()["ok"], true);
        assert!(extract_json("no json here").is_none());
    }

    #[test]
    fn labeled_fields() {
        let t = "THINK: I see a banner\nthat covers the page.\nACTION: click(1, 2)\n";
        assert_eq!(labeled_field(t, "think", &["THINK", "ACTION"]).unwrap(), "I see a banner that covers the page.");
        assert_eq!(labeled_field(t, "ACTION", &["THINK", "ACTION"]).unwrap(), "click(1, 2)");
        assert!(labeled_field(t, "SEQ", &["SEQ"]).is_none());
    }
}

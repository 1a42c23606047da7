//! Deterministic replay backend.
//!
//! A script is a JSON-lines file; each line names the role it answers and
//! the response text. `response` may also be a JSON object or array, which
//! is handed to the agent as its compact JSON text:
//!
//! ```text
//! {"role": "checklist", "response": {"checklist": ["Homepage loaded", "Help link visible"]}}
//! {"role": "reasoning", "response": "THINK: ...\nACTION: click(805, 876)"}
//! ```
//!
//! Calls must consume entries in order and with matching roles.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, ModelBackend, PromptBundle, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: Role,
    pub response: serde_json::Value,
    /// Free-form note for fixture authors; ignored at replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScriptEntry {
    pub fn new(role: Role, response: impl Into<String>) -> Self {
        Self { role, response: serde_json::Value::String(response.into()), note: None }
    }

    pub fn text(&self) -> String {
        match &self.response {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, entries: Vec<ScriptEntry>) -> Self {
        Self { name: name.into(), entries, cursor: Mutex::new(0) }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read script {}: {e}", path.display()))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|e| format!("{}:{}: bad script entry: {e}", path.display(), i + 1))?;
            entries.push(entry);
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "script".into());
        Ok(Self::new(name, entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("script cursor poisoned")
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.consumed()
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, role: Role, _bundle: &PromptBundle) -> Result<Completion, BackendError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        let call_index = *cursor as u64 + 1;
        let entry = self.entries.get(*cursor).ok_or(BackendError::FixtureUnderrun { call_index })?;
        if entry.role != role {
            return Err(BackendError::FixtureRoleMismatch { call_index, expected: entry.role, got: role });
        }
        *cursor += 1;
        Ok(Completion::text(entry.text()))
    }

    fn model_id(&self, role: Role) -> String {
        format!("scripted:{}:{}", self.name, role)
    }

    fn finish(&self) -> Result<(), BackendError> {
        let consumed = self.consumed();
        match self.entries.len() - consumed {
            0 => Ok(()),
            remaining => Err(BackendError::FixtureOverrun { consumed: consumed as u64, remaining }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order_and_guards_underrun() {
        let b = ScriptedBackend::new(
            "t",
            vec![ScriptEntry::new(Role::Checklist, "first"), ScriptEntry::new(Role::Reasoning, "second")],
        );
        let p = PromptBundle::default();
        assert_eq!(b.complete(Role::Checklist, &p).unwrap().text, "first");
        assert_eq!(
            b.complete(Role::Ux, &p).unwrap_err(),
            BackendError::FixtureRoleMismatch { call_index: 2, expected: Role::Reasoning, got: Role::Ux }
        );
        assert!(matches!(b.finish(), Err(BackendError::FixtureOverrun { consumed: 1, remaining: 1 })));
        assert_eq!(b.complete(Role::Reasoning, &p).unwrap().text, "second");
        let err = b.complete(Role::Reasoning, &p).unwrap_err();
        assert_eq!(err, BackendError::FixtureUnderrun { call_index: 3 });
        assert!(err.to_string().contains("call 3"));
        assert!(b.finish().is_ok());
    }

    #[test]
    fn parses_script_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(
            &path,
            "// comment\n{\"role\":\"checklist\",\"response\":{\"checklist\":[\"a b\",\"c\"]}}\n\n{\"role\":\"ux\",\"response\":\"SEQ: 7\"}\n",
        )
        .unwrap();
        let b = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(b.len(), 2);
        let p = PromptBundle::default();
        assert_eq!(b.complete(Role::Checklist, &p).unwrap().text, r#"{"checklist":["a b","c"]}"#);
        assert_eq!(b.model_id(Role::Ux), "scripted:script:ux");

        std::fs::write(&path, "{\"role\":\"nobody\",\"response\":\"x\"}\n").unwrap();
        assert!(ScriptedBackend::from_file(&path).unwrap_err().contains(":1:"));
    }
}

//! Prompt templates.
//!
//! Each template is a text file with a `[system]` and a `[user]` section.
//! Placeholders such as `{task}` are replaced when rendered; braces that do
//! not name a supplied variable (JSON examples, for instance) are left alone.
//! The built-in set can be overridden file by file from a directory.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::gateway::PromptBundle;
use crate::session::sha256_hex;

pub const PROMPT_SET_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptKind {
    Roadmap,
    ChecklistGenerate,
    ChecklistUpdate,
    Decide,
    Assess,
    Sus,
    Analyst,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::Roadmap,
        PromptKind::ChecklistGenerate,
        PromptKind::ChecklistUpdate,
        PromptKind::Decide,
        PromptKind::Assess,
        PromptKind::Sus,
        PromptKind::Analyst,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            PromptKind::Roadmap => "roadmap.txt",
            PromptKind::ChecklistGenerate => "checklist_generate.txt",
            PromptKind::ChecklistUpdate => "checklist_update.txt",
            PromptKind::Decide => "decide.txt",
            PromptKind::Assess => "assess.txt",
            PromptKind::Sus => "sus.txt",
            PromptKind::Analyst => "analyst.txt",
        }
    }

    fn builtin(&self) -> &'static str {
        match self {
            PromptKind::Roadmap => include_str!("../assets/prompts/roadmap.txt"),
            PromptKind::ChecklistGenerate => include_str!("../assets/prompts/checklist_generate.txt"),
            PromptKind::ChecklistUpdate => include_str!("../assets/prompts/checklist_update.txt"),
            PromptKind::Decide => include_str!("../assets/prompts/decide.txt"),
            PromptKind::Assess => include_str!("../assets/prompts/assess.txt"),
            PromptKind::Sus => include_str!("../assets/prompts/sus.txt"),
            PromptKind::Analyst => include_str!("../assets/prompts/analyst.txt"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read prompt {path}: {message}")]
    Io { path: String, message: String },
    #[error("prompt {0} needs a [system] and a [user] section")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    system: String,
    user: String,
}

impl Template {
    fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let text = text.replace("\r\n", "\n");
        let rest = text.trim_start().strip_prefix("[system]").ok_or_else(|| PromptError::Malformed(name.into()))?;
        let (system, user) = rest.split_once("\n[user]").ok_or_else(|| PromptError::Malformed(name.into()))?;
        Ok(Self { system: system.trim().to_string(), user: user.trim().to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<PromptKind, Template>,
    sources: BTreeMap<PromptKind, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let mut set = Self { templates: BTreeMap::new(), sources: BTreeMap::new() };
        for kind in PromptKind::ALL {
            set.insert(kind, kind.builtin()).expect("built-in prompts are well formed");
        }
        set
    }

    /// Built-in set with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.as_ref().join(kind.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Io { path: path.display().to_string(), message: e.to_string() })?;
                set.insert(kind, &text)?;
            }
        }
        Ok(set)
    }

    fn insert(&mut self, kind: PromptKind, text: &str) -> Result<(), PromptError> {
        self.templates.insert(kind, Template::parse(kind.file_name(), text)?);
        self.sources.insert(kind, text.to_string());
        Ok(())
    }

    /// Digest over the version and every template, recorded in the session header.
    pub fn hash(&self) -> String {
        let mut all = format!("v{PROMPT_SET_VERSION}\n");
        for (kind, src) in &self.sources {
            all.push_str(kind.file_name());
            all.push('\n');
            all.push_str(src);
            all.push('\0');
        }
        sha256_hex(all.as_bytes())
    }

    pub fn render(&self, kind: PromptKind, vars: &[(&str, &str)]) -> PromptBundle {
        let t = &self.templates[&kind];
        PromptBundle::new(substitute(&t.system, vars), substitute(&t.user, vars).trim_end().to_string())
    }
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 1..];
        let name_len = tail.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(tail.len());
        let name = &tail[..name_len];
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, v)) if tail[name_len..].starts_with('}') => {
                out.push_str(v);
                rest = &tail[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Formats re-prompt diagnostics for the `{diagnostics}` slot.
pub fn diagnostics_block(problems: &[String]) -> String {
    if problems.is_empty() {
        return String::new();
    }
    let mut out = String::from("\nYour previous reply could not be used:\n");
    for p in problems {
        out.push_str("- ");
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("Reply again following the required format.");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_hash_is_stable() {
        let a = PromptSet::builtin();
        assert_eq!(a.hash(), PromptSet::builtin().hash());
        let b = a.render(PromptKind::Decide, &[("task", "Find the guidelines")]);
        assert!(b.user.contains("Task: Find the guidelines"));
        assert!(b.system.contains("1000 x 1000"));
        // JSON braces survive substitution
        assert!(b.system.contains(r#"{"think_aloud""#));
    }

    #[test]
    fn substitution_only_touches_known_names() {
        assert_eq!(substitute("{a} {b} {a}x {", &[("a", "1")]), "1 {b} 1x {");
        assert_eq!(substitute("{\"k\": {a}}", &[("a", "v")]), "{\"k\": v}");
    }

    #[test]
    fn overrides_change_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sus.txt"), "[system]\nS\n[user]\nU {task}").unwrap();
        let set = PromptSet::with_overrides(dir.path()).unwrap();
        assert_ne!(set.hash(), PromptSet::builtin().hash());
        assert_eq!(set.render(PromptKind::Sus, &[("task", "t")]), PromptBundle::new("S", "U t"));
        std::fs::write(dir.path().join("sus.txt"), "no sections").unwrap();
        assert!(matches!(PromptSet::with_overrides(dir.path()), Err(PromptError::Malformed(_))));
    }
}

//! Pre-session planning: search for the site's help material and condense
//! it into a 2-4 sentence roadmap injected into every decision prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Role};
use crate::prompts::{diagnostics_block, PromptKind, PromptSet};
use crate::reply::extract_json;
use crate::session::TaskSpec;

pub const ROADMAP_MIN_SENTENCES: usize = 2;
pub const ROADMAP_MAX_SENTENCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoadmapError {
    #[error("roadmap must have 2-4 sentences, got {0}")]
    Count(usize),
    #[error("roadmap sentence {0} is empty")]
    Empty(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EipRoadmap {
    pub sentences: Vec<String>,
}

impl EipRoadmap {
    pub fn new(sentences: Vec<String>) -> Result<Self, RoadmapError> {
        let r = Self { sentences };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RoadmapError> {
        let n = self.sentences.len();
        if !(ROADMAP_MIN_SENTENCES..=ROADMAP_MAX_SENTENCES).contains(&n) {
            return Err(RoadmapError::Count(n));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(RoadmapError::Empty(i + 1));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        self.sentences.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
    }
}

/// Text used in prompts when there is no roadmap.
pub fn render_optional(roadmap: Option<&EipRoadmap>) -> String {
    roadmap.map(EipRoadmap::render).unwrap_or_else(|| "(none)".to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchResult>, String>;
}

/// Always returns nothing; planning then proceeds without a roadmap.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSearch;

impl SearchProvider for NoSearch {
    fn search(&self, _query: &str) -> Result<Vec<SearchResult>, String> {
        Ok(Vec::new())
    }
}

/// Canned results read from a `search.json` file (`{"results": [...]}`),
/// returned for any query.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureSearch {
    pub results: Vec<SearchResult>,
}

impl FixtureSearch {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, _query: &str) -> Result<Vec<SearchResult>, String> {
        Ok(self.results.clone())
    }
}

pub fn search_query(task: &TaskSpec) -> String {
    let host = task.target_url.host_str().unwrap_or_default();
    format!("{host} help {}", task.task_description)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoadmapPlan {
    pub roadmap: Option<EipRoadmap>,
    pub warnings: Vec<String>,
}

/// Splits a reply into roadmap sentences: a JSON list (bare or under
/// `roadmap`/`sentences`), otherwise prose split at sentence ends.
pub fn parse_roadmap_reply(text: &str) -> Vec<String> {
    let from_list = |v: &Value| -> Option<Vec<String>> {
        v.as_array().map(|a| a.iter().filter_map(|s| s.as_str()).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    };
    if let Some(v) = extract_json(text) {
        if let Some(list) = from_list(&v).or_else(|| from_list(&v["roadmap"])).or_else(|| from_list(&v["sentences"])) {
            return list;
        }
    }
    split_sentences(text)
}

fn strip_bullet(line: &str) -> &str {
    let l = line.trim_start();
    let l = l.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = l.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && l[digits..].starts_with(['.', ')']) {
        return l[digits + 1..].trim_start();
    }
    l
}

fn split_sentences(text: &str) -> Vec<String> {
    let joined = text.lines().map(strip_bullet).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = joined.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    if !current.trim().is_empty() {
        out.push(current.trim().to_string());
    }
    out
}

/// Runs the search and asks the reasoning engine for a roadmap. Failures
/// other than fatal gateway errors degrade to no roadmap plus a warning.
pub fn plan_roadmap(
    task: &TaskSpec,
    search: &dyn SearchProvider,
    gateway: &Gateway,
    prompts: &PromptSet,
    retries: u32,
) -> Result<RoadmapPlan, GatewayError> {
    let mut plan = RoadmapPlan::default();
    let results = match search.search(&search_query(task)) {
        Ok(r) => r,
        Err(e) => {
            plan.warnings.push(format!("roadmap: search failed ({e}); continuing without a roadmap"));
            return Ok(plan);
        }
    };
    if results.is_empty() {
        plan.warnings.push("roadmap: search returned no results; continuing without a roadmap".into());
        return Ok(plan);
    }
    let listing = results
        .iter()
        .map(|r| format!("- {} ({}): {}", r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n");

    let mut problems: Vec<String> = Vec::new();
    for attempt in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle = prompts.render(
            PromptKind::Roadmap,
            &[
                ("url", task.target_url.as_str()),
                ("task", &task.task_description),
                ("search_results", &listing),
                ("diagnostics", &diagnostics),
            ],
        );
        let text = match gateway.complete(Role::Reasoning, &bundle) {
            Ok(t) => t,
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                plan.warnings.push(format!("roadmap: {e}; continuing without a roadmap"));
                return Ok(plan);
            }
        };
        let sentences = parse_roadmap_reply(&text);
        let last = attempt == retries;
        match EipRoadmap::new(sentences.clone()) {
            Ok(r) => {
                plan.roadmap = Some(r);
                return Ok(plan);
            }
            Err(RoadmapError::Count(n)) if n > ROADMAP_MAX_SENTENCES && last => {
                plan.warnings.push(format!("roadmap: reply still had {n} sentences; kept the first {ROADMAP_MAX_SENTENCES}"));
                plan.roadmap = EipRoadmap::new(sentences.into_iter().take(ROADMAP_MAX_SENTENCES).collect()).ok();
                return Ok(plan);
            }
            Err(e) => problems = vec![format!("{e}; write 2 to 4 imperative sentences")],
        }
    }
    plan.warnings.push(format!("roadmap: no usable roadmap after {} attempts; continuing without one", retries + 1));
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{RetryPolicy, ScriptEntry, ScriptedBackend};
    use std::sync::Arc;

    fn gateway(responses: &[&str]) -> Gateway {
        let entries = responses.iter().map(|r| ScriptEntry::new(Role::Reasoning, *r)).collect();
        Gateway::new(Arc::new(ScriptedBackend::new("t", entries)), RetryPolicy::default()).with_sleeper(|_| {})
    }

    fn task() -> TaskSpec {
        TaskSpec::new("https://www.discogs.test/", "Find the submission guidelines").unwrap()
    }

    fn search() -> FixtureSearch {
        FixtureSearch {
            results: vec![SearchResult { title: "Help".into(), url: "https://h.test".into(), snippet: "Guides".into() }],
        }
    }

    #[test]
    fn parses_json_and_prose() {
        assert_eq!(parse_roadmap_reply(r#"{"roadmap": ["Scroll down.", "Open Help."]}"#), vec!["Scroll down.", "Open Help."]);
        assert_eq!(
            parse_roadmap_reply("1. Check the footer first.\n2. Open the Help section! Then read v2.1 notes"),
            vec!["Check the footer first.", "Open the Help section!", "Then read v2.1 notes"]
        );
    }

    #[test]
    fn valid_roadmap_first_try() {
        let gw = gateway(&[r#"{"roadmap": ["Look in the footer.", "Open the Help section."]}"#]);
        let plan = plan_roadmap(&task(), &search(), &gw, &PromptSet::builtin(), 2).unwrap();
        assert_eq!(plan.roadmap.unwrap().sentences.len(), 2);
        assert!(plan.warnings.is_empty());
        assert!(gw.finish().is_ok());
    }

    #[test]
    fn five_sentences_reprompt_then_truncate() {
        let five = "One. Two. Three. Four. Five.";
        let gw = gateway(&[five, five, five]);
        let plan = plan_roadmap(&task(), &search(), &gw, &PromptSet::builtin(), 2).unwrap();
        assert_eq!(plan.roadmap.unwrap().sentences, vec!["One.", "Two.", "Three.", "Four."]);
        assert_eq!(plan.warnings.len(), 1);
        assert!(gw.finish().is_ok());

        let gw = gateway(&[five, "Scroll down. Click Help."]);
        let plan = plan_roadmap(&task(), &search(), &gw, &PromptSet::builtin(), 2).unwrap();
        assert_eq!(plan.roadmap.unwrap().sentences.len(), 2);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn empty_search_skips_the_model() {
        let gw = gateway(&[]);
        let plan = plan_roadmap(&task(), &NoSearch, &gw, &PromptSet::builtin(), 2).unwrap();
        assert!(plan.roadmap.is_none());
        assert_eq!(plan.warnings.len(), 1);
        assert!(gw.drain_calls().is_empty());
    }

    #[test]
    fn fixture_underrun_is_fatal() {
        let gw = gateway(&[]);
        assert!(plan_roadmap(&task(), &search(), &gw, &PromptSet::builtin(), 2).is_err());
    }
}

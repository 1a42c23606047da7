//! Checklist engine: task decomposition and single-item status updates.

use serde_json::Value;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, Role};
use crate::prompts::{diagnostics_block, PromptKind, PromptSet};
use crate::reply::extract_json;
use crate::session::{checklist_changes, Checklist, ChecklistItem, ChecklistStatus, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdatePolicy {
    /// Require exactly one status change per action instead of at most one.
    pub strict: bool,
    pub allow_reversal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("proposed checklist has {got} items, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("item {index} text was changed")]
    TextMutated { index: usize },
    #[error("items {indices:?} changed; update at most one item per action")]
    TooManyChanges { indices: Vec<usize> },
    #[error("item {index}: {from} -> {to} is not an allowed transition")]
    IllegalTransition { index: usize, from: ChecklistStatus, to: ChecklistStatus },
    #[error("no item changed; strict mode requires exactly one update per action")]
    NoChange,
}

/// Accepts `proposed` if it keeps every text and changes at most one status
/// along a legal transition.
pub fn apply_checklist_update(current: &Checklist, proposed: &Checklist, policy: UpdatePolicy) -> Result<Checklist, UpdateError> {
    let changes = checklist_changes(current, proposed).map_err(|index| {
        if index == 0 {
            UpdateError::LengthMismatch { expected: current.items.len(), got: proposed.items.len() }
        } else {
            UpdateError::TextMutated { index }
        }
    })?;
    match changes.as_slice() {
        [] if policy.strict => Err(UpdateError::NoChange),
        [] => Ok(current.clone()),
        [c] if c.from.can_transition_to(c.to, policy.allow_reversal) => Ok(proposed.clone()),
        [c] => Err(UpdateError::IllegalTransition { index: c.index, from: c.from, to: c.to }),
        many => Err(UpdateError::TooManyChanges { indices: many.iter().map(|c| c.index).collect() }),
    }
}

/// Reads checklist items from a reply: a JSON list of strings or
/// `{text, status}` objects (bare or under `checklist`/`items`), or
/// numbered lines such as `1. [pending] Homepage loaded`.
pub fn parse_checklist_reply(text: &str) -> Result<Vec<ChecklistItem>, String> {
    if let Some(v) = extract_json(text) {
        let list = if v.is_array() {
            &v
        } else if v["checklist"].is_array() {
            &v["checklist"]
        } else {
            &v["items"]
        };
        if let Some(items) = list.as_array() {
            return items.iter().enumerate().map(|(i, it)| item_from_json(i + 1, it)).collect();
        }
    }
    let items: Vec<ChecklistItem> = text
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            let rest = if digits > 0 && l[digits..].starts_with(['.', ')']) {
                &l[digits + 1..]
            } else {
                l.strip_prefix(['-', '*'])?
            };
            Some(rest.trim())
        })
        .map(|rest| -> Result<ChecklistItem, String> {
            if let Some(body) = rest.strip_prefix('[') {
                let (status, text) = body.split_once(']').ok_or_else(|| format!("unclosed status in `{rest}`"))?;
                Ok(ChecklistItem { text: text.trim().to_string(), status: status.trim().parse()? })
            } else {
                Ok(ChecklistItem::pending(rest))
            }
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("no checklist found in reply; answer with a JSON list of items".into());
    }
    Ok(items)
}

fn item_from_json(index: usize, v: &Value) -> Result<ChecklistItem, String> {
    match v {
        Value::String(s) => Ok(ChecklistItem::pending(s.trim())),
        Value::Object(o) => {
            let text = o.get("text").and_then(Value::as_str).ok_or_else(|| format!("item {index} has no text"))?;
            let status = match o.get("status") {
                None => ChecklistStatus::Pending,
                Some(Value::String(s)) => s.parse().map_err(|e| format!("item {index}: {e}"))?,
                Some(other) => return Err(format!("item {index}: status must be a string, got {other}")),
            };
            Ok(ChecklistItem { text: text.trim().to_string(), status })
        }
        other => Err(format!("item {index} must be a string or object, got {other}")),
    }
}

/// Validates a freshly generated checklist: count, word limit, and every
/// item starting out pending.
pub fn validate_generated(items: Vec<ChecklistItem>) -> Result<Checklist, String> {
    if let Some(i) = items.iter().position(|it| it.status != ChecklistStatus::Pending) {
        return Err(format!("item {} must start as \"pending\"", i + 1));
    }
    Checklist::new(items).map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
pub enum ChecklistError {
    #[error("checklist generation failed after {attempts} attempts: {last}")]
    Invalid { attempts: u32, last: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn generate_checklist(task: &TaskSpec, gateway: &Gateway, prompts: &PromptSet, retries: u32) -> Result<Checklist, ChecklistError> {
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle =
            prompts.render(PromptKind::ChecklistGenerate, &[("task", &task.task_description), ("diagnostics", &diagnostics)]);
        let text = gateway.complete(Role::Checklist, &bundle)?;
        match parse_checklist_reply(&text).and_then(validate_generated) {
            Ok(c) => return Ok(c),
            Err(e) => {
                log::warn!("checklist: rejected generated checklist: {e}");
                problems = vec![e];
            }
        }
    }
    Err(ChecklistError::Invalid { attempts: retries + 1, last: problems.pop().unwrap_or_default() })
}

/// What the checklist engine is told about the step that just ran.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub task: &'a TaskSpec,
    pub action: &'a str,
    pub outcome: &'a str,
    pub think_aloud: &'a str,
    pub page: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateResult {
    pub checklist: Checklist,
    pub warning: Option<String>,
}

/// Asks for an updated checklist, re-prompting on invalid proposals. If no
/// valid proposal arrives the current checklist is kept and a warning
/// returned; only fatal gateway errors propagate.
pub fn update_checklist(
    ctx: StepContext<'_>,
    current: &Checklist,
    gateway: &Gateway,
    prompts: &PromptSet,
    policy: UpdatePolicy,
    retries: u32,
) -> Result<UpdateResult, GatewayError> {
    let rendered = current.render();
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle = prompts.render(
            PromptKind::ChecklistUpdate,
            &[
                ("task", &ctx.task.task_description),
                ("checklist", &rendered),
                ("action", ctx.action),
                ("outcome", ctx.outcome),
                ("think_aloud", ctx.think_aloud),
                ("page", ctx.page),
                ("diagnostics", &diagnostics),
            ],
        );
        let text = match gateway.complete(Role::Checklist, &bundle) {
            Ok(t) => t,
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => return Ok(UpdateResult { checklist: current.clone(), warning: Some(format!("checklist update: {e}")) }),
        };
        let proposed = parse_checklist_reply(&text).map(|items| Checklist { items });
        match proposed.and_then(|p| apply_checklist_update(current, &p, policy).map_err(|e| e.to_string())) {
            Ok(c) => return Ok(UpdateResult { checklist: c, warning: None }),
            Err(e) => problems = vec![e],
        }
    }
    Ok(UpdateResult {
        checklist: current.clone(),
        warning: Some(format!(
            "checklist update: kept previous checklist after {} invalid proposals ({})",
            retries + 1,
            problems.join("; ")
        )),
    })
}

use serde_json::Value;

use super::memory::AgentMemory;
use crate::action::{action_from_json, parse_action, Action, TerminateStatus};
use crate::gateway::{Gateway, GatewayError, ImageAttachment, Role};
use crate::grounding::Observation;
use crate::prompts::{diagnostics_block, PromptKind, PromptSet};
use crate::reply::{extract_json, labeled_field};
use crate::roadmap::{render_optional, EipRoadmap};
use crate::session::{Checklist, TaskSpec};

pub const INVALID_OUTPUT_REASON: &str = "model output invalid";

const TEXT_KEYS: [&str; 3] = ["THINK", "THOUGHT", "ACTION"];

pub struct DecideInput<'a> {
    pub task: &'a TaskSpec,
    pub observation: &'a Observation,
    pub checklist: &'a Checklist,
    pub roadmap: Option<&'a EipRoadmap>,
    pub step: u32,
    pub max_steps: u32,
    /// Screenshot sent alongside the tag table, when the backend takes images.
    pub screenshot: Option<&'a ImageAttachment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub think_aloud: String,
    pub action: Action,
    /// Last raw reply from the reasoning engine.
    pub raw: String,
    /// Reasons earlier replies were rejected.
    pub rejections: Vec<String>,
}

/// Reads `{think_aloud, action}` JSON, or `THINK:` / `ACTION:` lines.
/// The action may be a grammar string or a tagged object.
pub fn parse_decision(text: &str) -> Result<(String, Action), String> {
    let think = think_aloud_of(text).unwrap_or_default();
    if let Some(Value::Object(o)) = extract_json(text) {
        let action = o.get("action").ok_or("reply has no `action` field")?;
        let action = action_from_json(action).map_err(|e| e.to_string())?;
        return non_empty(think).map(|t| (t, action));
    }
    let action_text = labeled_field(text, "ACTION", &TEXT_KEYS).ok_or("reply has neither JSON nor an ACTION: line")?;
    let action = parse_action(&action_text).map_err(|e| e.to_string())?;
    non_empty(think).map(|t| (t, action))
}

/// The think-aloud part of a reply, even when the action is unusable.
fn think_aloud_of(text: &str) -> Option<String> {
    if let Some(Value::Object(o)) = extract_json(text) {
        return ["think_aloud", "thought", "think"]
            .iter()
            .find_map(|k| o.get(*k).and_then(Value::as_str))
            .map(|s| s.trim().to_string());
    }
    labeled_field(text, "THINK", &TEXT_KEYS).or_else(|| labeled_field(text, "THOUGHT", &TEXT_KEYS))
}

fn non_empty(think: String) -> Result<String, String> {
    if think.trim().is_empty() {
        Err("think_aloud is empty; say what you see and intend before acting".into())
    } else {
        Ok(think)
    }
}

/// Asks the reasoning engine for the next action, re-prompting with
/// diagnostics up to `retries` times. A context overflow shrinks memory and
/// tries again without using up a retry. Exhausted retries produce a
/// failing terminate rather than an error.
pub fn decide_step(
    input: &DecideInput<'_>,
    memory: &mut AgentMemory,
    gateway: &Gateway,
    prompts: &PromptSet,
    retries: u32,
) -> Result<Decision, GatewayError> {
    let elements = input.observation.tag_table();
    let page = super::describe_page(input.observation);
    let roadmap = render_optional(input.roadmap);
    let checklist = input.checklist.render();
    let step = input.step.to_string();
    let max_steps = input.max_steps.to_string();
    let persona = input.task.persona_profile.clone().unwrap_or_else(|| "a typical first-time visitor".into());

    let mut rejections: Vec<String> = Vec::new();
    let mut last_raw = String::new();
    let mut last_think = String::new();
    let mut attempt = 0;
    while attempt <= retries {
        let diagnostics = diagnostics_block(rejections.last().map(std::slice::from_ref).unwrap_or_default());
        let memory_text = memory.render();
        let loop_warning = memory.loop_warning().map(|w| format!("\nWarning: {w}\n")).unwrap_or_default();
        let bundle = prompts.render(
            PromptKind::Decide,
            &[
                ("task", &input.task.task_description),
                ("persona", &persona),
                ("step", &step),
                ("max_steps", &max_steps),
                ("roadmap", &roadmap),
                ("checklist", &checklist),
                ("memory", &memory_text),
                ("loop_warning", &loop_warning),
                ("page", &page),
                ("elements", &elements),
                ("diagnostics", &diagnostics),
            ],
        )
        .with_image(input.screenshot.cloned());
        let text = match gateway.complete(Role::Reasoning, &bundle) {
            Ok(t) => t,
            Err(GatewayError::ContextOverflow { .. }) if memory.compress() => continue,
            Err(e) => return Err(e),
        };
        attempt += 1;
        if let Some(t) = think_aloud_of(&text).filter(|t| !t.is_empty()) {
            last_think = t;
        }
        let parsed = parse_decision(&text).and_then(|(think, action)| {
            action.validate_against(input.observation).map_err(|e| e.to_string())?;
            Ok((think, action))
        });
        last_raw = text;
        match parsed {
            Ok((think_aloud, action)) => return Ok(Decision { think_aloud, action, raw: last_raw, rejections }),
            Err(e) => {
                log::warn!("step {}: rejected decision: {e}", input.step);
                rejections.push(e);
            }
        }
    }
    let think_aloud = if last_think.is_empty() { "(no usable reasoning was produced)".to_string() } else { last_think };
    Ok(Decision {
        think_aloud,
        action: Action::terminate(TerminateStatus::Failure, INVALID_OUTPUT_REASON),
        raw: last_raw,
        rejections,
    })
}

use std::collections::BTreeSet;

use serde_json::Value;
use thiserror::Error;

use crate::action::Action;
use crate::gateway::{Gateway, GatewayError, ImageAttachment, Role};
use crate::grounding::Observation;
use crate::metrics::Rating7;
use crate::prompts::{diagnostics_block, PromptKind, PromptSet};
use crate::reply::{extract_json, labeled_field};
use crate::session::{ActionOutcome, FrictionTag, StepAssessment, TaskSpec};

const TEXT_KEYS: [&str; 5] = ["SEQ", "EFFICIENCY", "CLARITY", "CONFIDENCE", "TAGS"];

pub struct AssessInput<'a> {
    pub task: &'a TaskSpec,
    pub action: &'a Action,
    pub outcome: &'a ActionOutcome,
    pub think_aloud: &'a str,
    /// Observation taken after the action settled.
    pub observation: &'a Observation,
    pub screenshot: Option<&'a ImageAttachment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assessed {
    pub assessment: StepAssessment,
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("ux engine gave no valid assessment after {attempts} attempts: {last}")]
    Invalid { attempts: u32, last: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn rating(v: Option<&Value>, field: &str) -> Result<Rating7, String> {
    let n = match v {
        Some(Value::Number(n)) => n.as_i64().ok_or_else(|| format!("`{field}` must be a whole number from 1 to 7"))?,
        Some(Value::String(s)) => s.trim().parse().map_err(|_| format!("`{field}` must be a whole number from 1 to 7"))?,
        _ => return Err(format!("missing `{field}`")),
    };
    Rating7::new(n).map_err(|_| format!("`{field}` = {n} is outside 1-7"))
}

fn tags<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<BTreeSet<FrictionTag>, String> {
    names
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .map(|s| FrictionTag::parse(&s.to_ascii_lowercase()).ok_or_else(|| format!("unknown friction tag `{s}`")))
        .collect()
}

/// Reads the assessment JSON, or `SEQ:` / `EFFICIENCY: n | note` /
/// `CLARITY:` / `CONFIDENCE:` / `TAGS:` lines.
pub fn parse_assessment(text: &str) -> Result<StepAssessment, String> {
    let assessment = if let Some(Value::Object(o)) = extract_json(text) {
        let note = |k: &str| -> String {
            o.get("notes")
                .and_then(|n| n.get(k))
                .or_else(|| o.get(&format!("{k}_note")))
                .and_then(Value::as_str)
                .unwrap_or_default()
                .trim()
                .to_string()
        };
        let tag_names: Vec<&str> = match o.get("friction_tags") {
            None | Some(Value::Null) => vec![],
            Some(Value::Array(a)) => a.iter().map(|t| t.as_str().ok_or("friction tags must be strings")).collect::<Result<_, _>>()?,
            Some(_) => return Err("`friction_tags` must be a list".into()),
        };
        StepAssessment {
            seq: rating(o.get("seq"), "seq")?,
            efficiency: rating(o.get("efficiency"), "efficiency")?,
            clarity: rating(o.get("clarity"), "clarity")?,
            confidence: rating(o.get("confidence"), "confidence")?,
            efficiency_note: note("efficiency"),
            clarity_note: note("clarity"),
            confidence_note: note("confidence"),
            friction_tags: tags(tag_names)?,
        }
    } else {
        let field = |k: &str| labeled_field(text, k, &TEXT_KEYS);
        let scored = |k: &str| -> Result<(Rating7, String), String> {
            let v = field(k).ok_or_else(|| format!("missing {k}: line"))?;
            let (score, note) = v.split_once('|').unwrap_or((&v, ""));
            Ok((rating(Some(&Value::String(score.to_string())), &k.to_ascii_lowercase())?, note.trim().to_string()))
        };
        let (seq, _) = scored("SEQ")?;
        let (efficiency, efficiency_note) = scored("EFFICIENCY")?;
        let (clarity, clarity_note) = scored("CLARITY")?;
        let (confidence, confidence_note) = scored("CONFIDENCE")?;
        let tag_line = field("TAGS").unwrap_or_default();
        StepAssessment {
            seq,
            efficiency,
            clarity,
            confidence,
            efficiency_note,
            clarity_note,
            confidence_note,
            friction_tags: tags(tag_line.split(','))?,
        }
    };
    assessment.validate().map_err(|e| e.to_string())?;
    Ok(assessment)
}

/// Asks the ux engine to rate the step that just ran.
pub fn assess_step(input: &AssessInput<'_>, gateway: &Gateway, prompts: &PromptSet, retries: u32) -> Result<Assessed, AssessError> {
    let action = input.action.to_string();
    let outcome = input.outcome.describe();
    let page = super::describe_page(input.observation);
    let elements = input.observation.tag_table();
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle = prompts.render(
            PromptKind::Assess,
            &[
                ("task", &input.task.task_description),
                ("action", &action),
                ("outcome", &outcome),
                ("think_aloud", input.think_aloud),
                ("page", &page),
                ("elements", &elements),
                ("diagnostics", &diagnostics),
            ],
        )
        .with_image(input.screenshot.cloned());
        let raw = gateway.complete(Role::Ux, &bundle)?;
        match parse_assessment(&raw) {
            Ok(assessment) => return Ok(Assessed { assessment, raw }),
            Err(e) => {
                log::warn!("rejected assessment: {e}");
                problems = vec![e];
            }
        }
    }
    Err(AssessError::Invalid { attempts: retries + 1, last: problems.pop().unwrap_or_default() })
}

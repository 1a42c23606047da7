//! Post-session analysis: SUS synthesis from step metrics and the friction
//! map of low-SEQ steps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::gateway::{Gateway, GatewayError, Role};
use crate::metrics::{
    aggregate_seq, classify_step, compute_sus, grade_sus, MetricsError, SeqRating, StepClass, SusResponses, SUS_STATEMENTS,
};
use crate::prompts::{diagnostics_block, PromptKind, PromptSet};
use crate::reply::extract_json;
use crate::session::{ActionRecord, FrictionTag, OutcomeKind, SessionLog, SusSynthesis, SynthesisMode};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("cannot synthesize SUS: {0}")]
    Metrics(#[from] MetricsError),
    #[error("cannot synthesize SUS: session has not terminated")]
    NotTerminated,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleOptions {
    /// Drop each dimension's lowest and highest step before averaging
    /// (only when at least three steps exist).
    pub trim_outliers: bool,
}

/// Sum and count for one 1-7 dimension, kept as integers so the mapping is
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DimMean {
    sum: u32,
    count: u32,
}

impl DimMean {
    fn of(values: impl Iterator<Item = u8>, trim: bool) -> Self {
        let mut v: Vec<u32> = values.map(u32::from).collect();
        if trim && v.len() >= 3 {
            v.sort_unstable();
            v.remove(0);
            v.pop();
        }
        Self { sum: v.iter().sum(), count: v.len() as u32 }
    }

    /// round(1 + 4(m - 1)/6) with halves rounded up, as floor((5n + 4S) / 6n).
    fn likert(&self) -> u8 {
        let n = self.count.max(1) as u64;
        ((5 * n + 4 * self.sum as u64) / (6 * n)).clamp(1, 5) as u8
    }

    fn negated(&self) -> u8 {
        6 - self.likert()
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.count.max(1) as f64
    }
}

struct SessionMeans {
    seq: DimMean,
    efficiency: DimMean,
    clarity: DimMean,
    confidence: DimMean,
}

impl SessionMeans {
    fn of(records: &[ActionRecord], trim: bool) -> Self {
        let dim = |f: fn(&ActionRecord) -> u8| DimMean::of(records.iter().map(f), trim);
        Self {
            seq: dim(|r| r.assessment.seq.get()),
            efficiency: dim(|r| r.assessment.efficiency.get()),
            clarity: dim(|r| r.assessment.clarity.get()),
            confidence: dim(|r| r.assessment.confidence.get()),
        }
    }
}

/// Deterministic SUS answers from the session's average step ratings.
///
/// Confidence drives items 1 and 9, SEQ items 3 and 7 (and, negated, 4 and
/// 10), clarity item 5 (negated: item 2), efficiency negated drives item 8,
/// and item 6 follows the weaker of clarity and SEQ, negated.
pub fn rule_based_responses(records: &[ActionRecord], options: RuleOptions) -> Result<SusResponses, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoAssessedSteps);
    }
    let m = SessionMeans::of(records, options.trim_outliers);
    let weaker = if m.clarity.sum <= m.seq.sum { m.clarity } else { m.seq };
    let items = [
        m.confidence.likert(),
        m.clarity.negated(),
        m.seq.likert(),
        m.seq.negated(),
        m.clarity.likert(),
        weaker.negated(),
        m.seq.likert(),
        m.efficiency.negated(),
        m.confidence.likert(),
        m.seq.negated(),
    ];
    SusResponses::new(&items.map(i64::from))
}

/// Reads ten Likert answers from `{"responses": [...]}` or a bare list.
pub fn parse_sus_reply(text: &str) -> Result<SusResponses, String> {
    let v = extract_json(text).ok_or("reply has no JSON list of ten answers")?;
    let list = if v.is_array() { &v } else { &v["responses"] };
    let items = list.as_array().ok_or("`responses` must be a list of ten numbers")?;
    let nums: Vec<i64> = items
        .iter()
        .map(|x| x.as_i64().ok_or_else(|| format!("answer `{x}` is not a whole number")))
        .collect::<Result<_, _>>()?;
    SusResponses::new(&nums).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisRequest {
    RuleBased,
    Model { retries: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub sus: SusSynthesis,
    pub warning: Option<String>,
}

fn metrics_block(records: &[ActionRecord]) -> String {
    let m = SessionMeans::of(records, false);
    format!(
        "seq {:.2}, efficiency {:.2}, clarity {:.2}, confidence {:.2} over {} steps",
        m.seq.mean(),
        m.efficiency.mean(),
        m.clarity.mean(),
        m.confidence.mean(),
        records.len()
    )
}

fn steps_block(records: &[ActionRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let a = &r.assessment;
            let tags: Vec<&str> = a.friction_tags.iter().map(FrictionTag::as_str).collect();
            format!(
                "{}. {} -> {}; seq {}, efficiency {}, clarity {}, confidence {}; tags [{}]",
                r.step_index,
                r.action,
                r.action_outcome.describe(),
                a.seq,
                a.efficiency,
                a.clarity,
                a.confidence,
                tags.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn finish(log: &SessionLog, responses: SusResponses, mode: SynthesisMode, downgraded: bool) -> Result<SusSynthesis, SynthesisError> {
    let seq_summary = aggregate_seq(&log.seq_series())?;
    let score = compute_sus(&responses);
    Ok(SusSynthesis { responses, score, grade: grade_sus(score), mode, downgraded, seq_summary })
}

/// Produces SUS answers for a terminated session. The model path falls back
/// to the rule-based mapping (flagged as downgraded) when the ux engine
/// cannot supply ten valid answers; fatal gateway errors propagate.
pub fn synthesize_sus(
    log: &SessionLog,
    request: SynthesisRequest,
    gateway: Option<&Gateway>,
    prompts: &PromptSet,
    options: RuleOptions,
) -> Result<SynthesisResult, SynthesisError> {
    if log.terminal.is_none() {
        return Err(SynthesisError::NotTerminated);
    }
    if log.records.is_empty() {
        return Err(MetricsError::NoAssessedSteps.into());
    }
    let rule = |warning: Option<String>| -> Result<SynthesisResult, SynthesisError> {
        let responses = rule_based_responses(&log.records, options)?;
        let downgraded = warning.is_some();
        Ok(SynthesisResult { sus: finish(log, responses, SynthesisMode::RuleBased, downgraded)?, warning })
    };
    let (retries, gateway) = match (request, gateway) {
        (SynthesisRequest::RuleBased, _) => return rule(None),
        (SynthesisRequest::Model { .. }, None) => return rule(Some("SUS synthesis: no ux engine; used rule-based mapping".into())),
        (SynthesisRequest::Model { retries }, Some(g)) => (retries, g),
    };

    let statements = SUS_STATEMENTS.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n");
    let metrics = metrics_block(&log.records);
    let steps = steps_block(&log.records);
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle = prompts.render(
            PromptKind::Sus,
            &[
                ("task", &log.header.task.task_description),
                ("statements", &statements),
                ("metrics", &metrics),
                ("steps", &steps),
                ("diagnostics", &diagnostics),
            ],
        );
        let text = match gateway.complete(Role::Ux, &bundle) {
            Ok(t) => t,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => return rule(Some(format!("SUS synthesis: {e}; fell back to rule-based mapping"))),
        };
        match parse_sus_reply(&text) {
            Ok(responses) => {
                return Ok(SynthesisResult { sus: finish(log, responses, SynthesisMode::Model, false)?, warning: None });
            }
            Err(e) => problems = vec![e],
        }
    }
    rule(Some(format!(
        "SUS synthesis: no valid answers after {} attempts ({}); fell back to rule-based mapping",
        retries + 1,
        problems.join("; ")
    )))
}

/// Tags in the order used to pick a step's dominant friction.
pub const TAG_PRIORITY: [FrictionTag; 8] = [
    FrictionTag::Error,
    FrictionTag::Waiting,
    FrictionTag::Retrying,
    FrictionTag::Confusion,
    FrictionTag::Ambiguity,
    FrictionTag::Searching,
    FrictionTag::Scrolling,
    FrictionTag::Uncertainty,
];

pub fn dominant_tag(tags: &BTreeSet<FrictionTag>) -> Option<FrictionTag> {
    TAG_PRIORITY.into_iter().find(|t| tags.contains(t))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrictionPoint {
    pub step_index: u32,
    pub seq: SeqRating,
    pub tags: BTreeSet<FrictionTag>,
    pub think_aloud_excerpt: String,
    pub element_descriptor: String,
    pub diagnosis: String,
}

const EXCERPT_CHARS: usize = 240;

fn excerpt(text: &str) -> String {
    let text = text.trim();
    if text.chars().count() <= EXCERPT_CHARS {
        return text.to_string();
    }
    let cut: String = text.chars().take(EXCERPT_CHARS - 3).collect();
    format!("{}...", cut.trim_end())
}

/// Human description of what the step acted on.
pub fn element_descriptor(r: &ActionRecord) -> String {
    if let Some(t) = &r.target {
        return t.descriptor();
    }
    match &r.action {
        Action::Scroll { .. } => "page (scroll)".to_string(),
        Action::Terminate { .. } => "session end".to_string(),
        a => match a.point() {
            Some(p) => format!("empty area at ({}, {})", p.x, p.y),
            None => "page".to_string(),
        },
    }
}

fn template_diagnosis(r: &ActionRecord, element: &str) -> String {
    let outcome = &r.action_outcome;
    match outcome.kind {
        OutcomeKind::Failed => return format!("Input on {element} did not complete ({}).", outcome.reason),
        OutcomeKind::Rejected => return format!("The action on {element} was rejected ({}).", outcome.reason),
        OutcomeKind::Applied if !outcome.state_changed && !r.action.is_terminate() => {
            return format!("Using {element} produced no visible change, so the participant was stuck.");
        }
        OutcomeKind::Applied => {}
    }
    match dominant_tag(&r.assessment.friction_tags) {
        Some(FrictionTag::Error) => format!("The participant hit an error around {element}."),
        Some(FrictionTag::Waiting) => format!("The page was slow to respond after using {element}."),
        Some(FrictionTag::Retrying) => format!("The participant had to repeat the interaction with {element}."),
        Some(FrictionTag::Confusion) => format!("The participant was confused by {element}."),
        Some(FrictionTag::Ambiguity) => format!("It was unclear what {element} would do or what it showed."),
        Some(FrictionTag::Searching) => format!("The participant struggled to find what they needed near {element}."),
        Some(FrictionTag::Scrolling) => format!("The participant had to scroll extensively around {element}."),
        Some(FrictionTag::Uncertainty) => format!("The participant could not tell whether using {element} worked."),
        None => format!("The step on {element} was rated difficult without a specific tag."),
    }
}

/// One point per friction-class step (SEQ at or below the friction
/// threshold), in step order, with a templated diagnosis.
pub fn build_friction_map(log: &SessionLog) -> Vec<FrictionPoint> {
    log.records
        .iter()
        .filter(|r| classify_step(r.assessment.seq) == StepClass::Friction)
        .map(|r| {
            let element = element_descriptor(r);
            FrictionPoint {
                step_index: r.step_index,
                seq: r.assessment.seq,
                tags: r.assessment.friction_tags.clone(),
                think_aloud_excerpt: excerpt(&r.think_aloud),
                diagnosis: template_diagnosis(r, &element),
                element_descriptor: element,
            }
        })
        .collect()
}

pub use crate::session::AnalystNote;

fn parse_analyst_reply(text: &str, points: &[FrictionPoint]) -> Result<Vec<AnalystNote>, String> {
    let v = extract_json(text).ok_or("reply has no JSON")?;
    let list = if v.is_array() { &v } else { &v["points"] };
    let list = list.as_array().ok_or("`points` must be a list")?;
    let mut notes = Vec::new();
    for p in list {
        let step = p["step"].as_u64().ok_or("each point needs a numeric `step`")? as u32;
        if !points.iter().any(|fp| fp.step_index == step) {
            return Err(format!("step {step} is not a friction point"));
        }
        let field = |k: &str| p[k].as_str().map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        notes.push(AnalystNote {
            step_index: step,
            diagnosis: field("diagnosis").ok_or_else(|| format!("step {step}: missing diagnosis"))?,
            recommendation: field("recommendation").ok_or_else(|| format!("step {step}: missing recommendation"))?,
        });
    }
    Ok(notes)
}

/// Asks the ux engine to act as analyst over the friction map. Returns
/// `Ok(None)` with the templates left in place if no valid reply arrives.
pub fn analyst_notes(
    log: &SessionLog,
    points: &[FrictionPoint],
    gateway: &Gateway,
    prompts: &PromptSet,
    retries: u32,
) -> Result<Option<Vec<AnalystNote>>, GatewayError> {
    if points.is_empty() {
        return Ok(None);
    }
    let friction = points
        .iter()
        .map(|p| {
            let tags: Vec<&str> = p.tags.iter().map(FrictionTag::as_str).collect();
            format!("Step {} (SEQ {}), {}: tags [{}]; participant said: \"{}\"", p.step_index, p.seq, p.element_descriptor, tags.join(", "), p.think_aloud_excerpt)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut problems: Vec<String> = Vec::new();
    for _ in 0..=retries {
        let diagnostics = diagnostics_block(&problems);
        let bundle = prompts.render(
            PromptKind::Analyst,
            &[("task", &log.header.task.task_description), ("friction", &friction), ("diagnostics", &diagnostics)],
        );
        let text = match gateway.complete(Role::Ux, &bundle) {
            Ok(t) => t,
            Err(e) if e.is_fatal() => return Err(e),
            Err(_) => return Ok(None),
        };
        match parse_analyst_reply(&text, points) {
            Ok(n) => return Ok(Some(n)),
            Err(e) => problems = vec![e],
        }
    }
    Ok(None)
}

//! Session data model: task, checklist, per-step records and the final
//! synthesis, plus the integrity rules every persisted session obeys.

mod persist;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use url::Url;

use crate::action::Action;
use crate::gateway::ModelCallRecord;
use crate::grounding::Viewport;
use crate::metrics::{CgsGrade, Rating7, SeqRating, SeqSummary, SusResponses, SusScore};
use crate::roadmap::EipRoadmap;

pub use persist::{load_session, save_session, LoadError, LoadMode, LoadedSession, LogLine, SessionWriter};
pub use store::{sha256_hex, ObservationStore, StoreError};

/// Schema version written into every session header.
pub const SESSION_SCHEMA_VERSION: u32 = 1;

/// Maximum words in one checklist item.
pub const CHECKLIST_MAX_WORDS: usize = 10;
pub const CHECKLIST_MIN_ITEMS: usize = 2;
pub const CHECKLIST_MAX_ITEMS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("target_url `{0}` is not a valid absolute URL")]
    InvalidUrl(String),
    #[error("task_description must not be empty")]
    EmptyTask,
    #[error("checklist must have 2-6 items, got {0}")]
    ChecklistCount(usize),
    #[error("checklist item {index} has {words} words (max 10): `{text}`")]
    ChecklistItemTooLong { index: usize, words: usize, text: String },
    #[error("checklist item {index} is empty")]
    ChecklistItemEmpty { index: usize },
    #[error("assessment field `{0}` must not be empty")]
    EmptyNote(&'static str),
    #[error("think_aloud must not be empty")]
    EmptyThinkAloud,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("step index gap: expected {expected}, got {got}")]
    IndexGap { expected: u32, got: u32 },
    #[error("checklist changed in {count} items at step {step} (items {indices:?}); at most one may change")]
    ChecklistDelta { step: u32, count: usize, indices: Vec<usize> },
    #[error("illegal checklist transition at step {step}: item {index} {from} -> {to}")]
    IllegalTransition { step: u32, index: usize, from: ChecklistStatus, to: ChecklistStatus },
    #[error("checklist item {index} text changed at step {step}")]
    ChecklistTextChanged { step: u32, index: usize },
    #[error("checklist length changed at step {step}")]
    ChecklistLength { step: u32 },
    #[error("session already terminated")]
    AlreadyTerminated,
    #[error("invalid record at step {step}: {source}")]
    InvalidRecord { step: u32, source: SessionError },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyFlags {
    #[serde(default = "default_true")]
    pub login_prohibited: bool,
}

impl Default for PolicyFlags {
    fn default() -> Self {
        Self { login_prohibited: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub target_url: Url,
    pub task_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_profile: Option<String>,
    #[serde(default)]
    pub policy: PolicyFlags,
}

impl TaskSpec {
    pub fn new(target_url: &str, task_description: &str) -> Result<Self, SessionError> {
        let url = Url::parse(target_url.trim()).map_err(|_| SessionError::InvalidUrl(target_url.to_string()))?;
        if url.cannot_be_a_base() {
            return Err(SessionError::InvalidUrl(target_url.to_string()));
        }
        let task = Self {
            target_url: url,
            task_description: task_description.trim().to_string(),
            persona_profile: None,
            policy: PolicyFlags::default(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.task_description.trim().is_empty() {
            return Err(SessionError::EmptyTask);
        }
        if self.target_url.cannot_be_a_base() {
            return Err(SessionError::InvalidUrl(self.target_url.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChecklistStatus {
    Pending,
    InProgress,
    Completed,
    Failed,
}

impl ChecklistStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChecklistStatus::Pending => "pending",
            ChecklistStatus::InProgress => "in_progress",
            ChecklistStatus::Completed => "completed",
            ChecklistStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, ChecklistStatus::Completed | ChecklistStatus::Failed)
    }

    /// Legal lifecycle moves. With `allow_reversal`, a completed or failed
    /// item may move between the two terminal states or back to in_progress;
    /// nothing ever returns to pending.
    pub fn can_transition_to(&self, next: ChecklistStatus, allow_reversal: bool) -> bool {
        use ChecklistStatus::*;
        match (self, next) {
            (a, b) if *a == b => true,
            (Pending, InProgress | Completed | Failed) => true,
            (InProgress, Completed | Failed) => true,
            (Completed | Failed, InProgress | Completed | Failed) => allow_reversal,
            _ => false,
        }
    }
}

impl fmt::Display for ChecklistStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChecklistStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ChecklistStatus::Pending),
            "in_progress" => Ok(ChecklistStatus::InProgress),
            "completed" => Ok(ChecklistStatus::Completed),
            "failed" => Ok(ChecklistStatus::Failed),
            other => Err(format!(
                "invalid checklist status `{other}`: status must be one of pending, in_progress, completed, failed (lowercase)"
            )),
        }
    }
}

impl Serialize for ChecklistStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ChecklistStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whitespace-separated words; hyphenated compounds count once.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub text: String,
    pub status: ChecklistStatus,
}

impl ChecklistItem {
    pub fn pending(text: impl Into<String>) -> Self {
        Self { text: text.into(), status: ChecklistStatus::Pending }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checklist {
    pub items: Vec<ChecklistItem>,
}

impl Checklist {
    pub fn new(items: Vec<ChecklistItem>) -> Result<Self, SessionError> {
        let c = Self { items };
        c.validate()?;
        Ok(c)
    }

    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self, SessionError> {
        Self::new(texts.iter().map(|t| ChecklistItem::pending(t.as_ref().trim())).collect())
    }

    /// Count bound and per-item word limit. Errors use 1-based item indices.
    pub fn validate(&self) -> Result<(), SessionError> {
        let n = self.items.len();
        if !(CHECKLIST_MIN_ITEMS..=CHECKLIST_MAX_ITEMS).contains(&n) {
            return Err(SessionError::ChecklistCount(n));
        }
        for (i, item) in self.items.iter().enumerate() {
            let words = word_count(&item.text);
            if words == 0 {
                return Err(SessionError::ChecklistItemEmpty { index: i + 1 });
            }
            if words > CHECKLIST_MAX_WORDS {
                return Err(SessionError::ChecklistItemTooLong { index: i + 1, words, text: item.text.clone() });
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| format!("{}. [{}] {}", i + 1, it.status, it.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A single status change between two checklist snapshots (1-based index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChecklistChange {
    pub index: usize,
    pub from: ChecklistStatus,
    pub to: ChecklistStatus,
}

/// Status changes from `prev` to `next`, provided the item texts match.
/// `Err(index)` names the first item (1-based) whose text differs, or 0 when
/// the lengths differ.
pub fn checklist_changes(prev: &Checklist, next: &Checklist) -> Result<Vec<ChecklistChange>, usize> {
    if prev.items.len() != next.items.len() {
        return Err(0);
    }
    let mut changes = Vec::new();
    for (i, (a, b)) in prev.items.iter().zip(&next.items).enumerate() {
        if a.text != b.text {
            return Err(i + 1);
        }
        if a.status != b.status {
            changes.push(ChecklistChange { index: i + 1, from: a.status, to: b.status });
        }
    }
    Ok(changes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionTag {
    Waiting,
    Searching,
    Retrying,
    Scrolling,
    Confusion,
    Error,
    Ambiguity,
    Uncertainty,
}

impl FrictionTag {
    pub const ALL: [FrictionTag; 8] = [
        FrictionTag::Waiting,
        FrictionTag::Searching,
        FrictionTag::Retrying,
        FrictionTag::Scrolling,
        FrictionTag::Confusion,
        FrictionTag::Error,
        FrictionTag::Ambiguity,
        FrictionTag::Uncertainty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FrictionTag::Waiting => "waiting",
            FrictionTag::Searching => "searching",
            FrictionTag::Retrying => "retrying",
            FrictionTag::Scrolling => "scrolling",
            FrictionTag::Confusion => "confusion",
            FrictionTag::Error => "error",
            FrictionTag::Ambiguity => "ambiguity",
            FrictionTag::Uncertainty => "uncertainty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAssessment {
    pub seq: SeqRating,
    pub efficiency: Rating7,
    pub clarity: Rating7,
    pub confidence: Rating7,
    pub efficiency_note: String,
    pub clarity_note: String,
    pub confidence_note: String,
    #[serde(default)]
    pub friction_tags: BTreeSet<FrictionTag>,
}

impl StepAssessment {
    pub fn validate(&self) -> Result<(), SessionError> {
        for (name, note) in [
            ("efficiency_note", &self.efficiency_note),
            ("clarity_note", &self.clarity_note),
            ("confidence_note", &self.confidence_note),
        ] {
            if note.trim().is_empty() {
                return Err(SessionError::EmptyNote(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Applied,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub kind: OutcomeKind,
    #[serde(default)]
    pub reason: String,
    /// Whether the page state (URL, DOM or simulator hash) changed.
    #[serde(default)]
    pub state_changed: bool,
}

impl ActionOutcome {
    pub fn applied(state_changed: bool) -> Self {
        Self { kind: OutcomeKind::Applied, reason: String::new(), state_changed }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        Self { kind: OutcomeKind::Failed, reason: reason.into(), state_changed: false }
    }

    pub fn rejected(reason: impl Into<String>) -> Self {
        Self { kind: OutcomeKind::Rejected, reason: reason.into(), state_changed: false }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            OutcomeKind::Applied if self.state_changed => "applied, page changed".to_string(),
            OutcomeKind::Applied => "applied, no visible change".to_string(),
            OutcomeKind::Rejected => format!("rejected ({})", self.reason),
            OutcomeKind::Failed => format!("failed ({})", self.reason),
        }
    }
}

/// The element an action landed on, as seen in its observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetElement {
    pub tag_id: u32,
    pub role: String,
    pub label: String,
}

impl TargetElement {
    pub fn descriptor(&self) -> String {
        format!("{} \"{}\"", self.role, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step_index: u32,
    pub think_aloud: String,
    pub action: Action,
    pub action_outcome: ActionOutcome,
    pub assessment: StepAssessment,
    pub observation_ref: String,
    pub checklist_after: Checklist,
    #[serde(with = "timestamp_ms")]
    pub timestamp: DateTime<Utc>,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetElement>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_decision: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_assessment: String,
}

impl ActionRecord {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.think_aloud.trim().is_empty() {
            return Err(SessionError::EmptyThinkAloud);
        }
        self.assessment.validate()?;
        self.checklist_after.validate()
    }
}

/// UTC timestamps serialized with millisecond precision.
pub mod timestamp_ms {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| serde::de::Error::custom(format!("invalid timestamp `{s}`: {e}")))
    }
}

/// Truncates to whole milliseconds.
pub fn millis(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).unwrap_or(t)
}

/// Model identifiers serving the three engine roles.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngineConfig {
    pub reasoning: String,
    pub ux: String,
    pub checklist: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub schema_version: u32,
    pub session_id: String,
    pub task: TaskSpec,
    pub engine_config: EngineConfig,
    /// Digest of the prompt template set used for the run.
    pub template_hash: String,
    pub viewport: Viewport,
    #[serde(with = "timestamp_ms")]
    pub created_at: DateTime<Utc>,
    /// Checklist rule the session ran under (see [`ChecklistStatus::can_transition_to`]).
    #[serde(default)]
    pub allow_checklist_reversal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Success,
    Failure,
    BudgetExhausted,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Success => "success",
            TerminalStatus::Failure => "failure",
            TerminalStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    pub status: TerminalStatus,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    Model,
    RuleBased,
}

impl SynthesisMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthesisMode::Model => "model",
            SynthesisMode::RuleBased => "rule_based",
        }
    }
}

/// Post-task SUS answers with the metrics derived from the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusSynthesis {
    pub responses: SusResponses,
    pub score: SusScore,
    pub grade: CgsGrade,
    pub mode: SynthesisMode,
    /// Set when the model path failed and the rule-based mapping was used.
    #[serde(default)]
    pub downgraded: bool,
    pub seq_summary: SeqSummary,
}

/// Model-written diagnosis and recommendation for one friction point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalystNote {
    pub step_index: u32,
    pub diagnosis: String,
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub roadmap: Option<EipRoadmap>,
    pub initial_checklist: Option<Checklist>,
    pub records: Vec<ActionRecord>,
    pub model_calls: Vec<ModelCallRecord>,
    pub warnings: Vec<String>,
    pub terminal: Option<Terminal>,
    pub sus: Option<SusSynthesis>,
    pub analyst: Option<Vec<AnalystNote>>,
}

impl SessionLog {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            header,
            roadmap: None,
            initial_checklist: None,
            records: Vec::new(),
            model_calls: Vec::new(),
            warnings: Vec::new(),
            terminal: None,
            sus: None,
            analyst: None,
        }
    }

    /// Checklist in force after the last record.
    pub fn current_checklist(&self) -> Option<&Checklist> {
        self.records.last().map(|r| &r.checklist_after).or(self.initial_checklist.as_ref())
    }

    pub fn next_step_index(&self) -> u32 {
        self.records.len() as u32 + 1
    }

    pub fn seq_series(&self) -> Vec<SeqRating> {
        self.records.iter().map(|r| r.assessment.seq).collect()
    }

    /// Checks a record against the log's integrity rules without appending.
    pub fn check_record(&self, record: &ActionRecord) -> Result<(), IntegrityError> {
        if self.terminal.is_some() {
            return Err(IntegrityError::AlreadyTerminated);
        }
        let expected = self.next_step_index();
        if record.step_index != expected {
            return Err(IntegrityError::IndexGap { expected, got: record.step_index });
        }
        let step = record.step_index;
        record.validate().map_err(|source| IntegrityError::InvalidRecord { step, source })?;
        if let Some(prev) = self.current_checklist() {
            check_checklist_step(prev, &record.checklist_after, step, self.header.allow_checklist_reversal)?;
        }
        Ok(())
    }

    /// Appends a record after checking step continuity and the
    /// one-item-per-action checklist rule.
    pub fn append_record(&mut self, record: ActionRecord) -> Result<(), IntegrityError> {
        self.check_record(&record)?;
        self.records.push(record);
        Ok(())
    }
}

/// Single-step checklist rule shared by the loop and the loader.
pub fn check_checklist_step(prev: &Checklist, next: &Checklist, step: u32, allow_reversal: bool) -> Result<(), IntegrityError> {
    let changes = checklist_changes(prev, next).map_err(|index| {
        if index == 0 {
            IntegrityError::ChecklistLength { step }
        } else {
            IntegrityError::ChecklistTextChanged { step, index }
        }
    })?;
    if changes.len() > 1 {
        return Err(IntegrityError::ChecklistDelta {
            step,
            count: changes.len(),
            indices: changes.iter().map(|c| c.index).collect(),
        });
    }
    if let Some(c) = changes.first() {
        if !c.from.can_transition_to(c.to, allow_reversal) {
            return Err(IntegrityError::IllegalTransition { step, index: c.index, from: c.from, to: c.to });
        }
    }
    Ok(())
}

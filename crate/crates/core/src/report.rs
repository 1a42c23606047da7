//! UX report: a versioned JSON document built from a closed session, and a
//! Markdown rendering that is a pure function of that document.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{classify_step, CgsGrade, GOOD_EXPERIENCE_MEAN, SEQ_FRICTION_THRESHOLD, SEQ_SUCCESS_THRESHOLD};
use crate::session::{ChecklistItem, OutcomeKind, SessionLog};
use crate::synthesis::{dominant_tag, element_descriptor, AnalystNote, FrictionPoint};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("session has no SUS synthesis; run synthesis first (for example `uxprobe report --synthesize`)")]
    MissingSus,
    #[error("session has not terminated")]
    NotTerminated,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Remedies {
    remedies: BTreeMap<String, String>,
}

static BUILTIN_REMEDIES: LazyLock<Remedies> =
    LazyLock::new(|| toml::from_str(include_str!("../assets/remedies.toml")).expect("builtin remedies parse"));

impl Remedies {
    pub fn builtin() -> &'static Remedies {
        &BUILTIN_REMEDIES
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn get(&self, key: &str) -> &str {
        self.remedies
            .get(key)
            .or_else(|| self.remedies.get("untagged"))
            .map(String::as_str)
            .unwrap_or("reviewing this step")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTask {
    pub url: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub status: String,
    pub reason: String,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStep {
    pub index: u32,
    pub action: String,
    pub outcome: String,
    pub element: String,
    pub seq: u8,
    pub class: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSeq {
    /// Mean rounded to two decimals; `sum / count` is exact.
    pub mean: f64,
    pub sum: u32,
    pub count: usize,
    pub min: u8,
    pub good_experience: bool,
    pub good_experience_mean: f64,
    pub friction_threshold: f64,
    pub success_threshold: f64,
    pub trajectory: Vec<u8>,
    pub friction_steps: Vec<usize>,
    pub success_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFriction {
    pub step: u32,
    pub seq: u8,
    pub element: String,
    pub dominant: String,
    pub tags: Vec<String>,
    pub excerpt: String,
    pub diagnosis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSus {
    pub score: f64,
    pub grade: CgsGrade,
    pub percentile_range: [u8; 2],
    pub responses: Vec<u8>,
    pub mode: String,
    pub downgraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub step: u32,
    pub text: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UxReport {
    pub schema_version: u32,
    pub session_id: String,
    pub created_at: String,
    pub task: ReportTask,
    pub engines: BTreeMap<String, String>,
    pub outcome: ReportOutcome,
    pub roadmap: Vec<String>,
    pub checklist: Vec<ChecklistItem>,
    pub steps: Vec<ReportStep>,
    pub seq: ReportSeq,
    pub friction_map: Vec<ReportFriction>,
    pub sus: ReportSus,
    pub recommendations: Vec<Recommendation>,
    pub warnings: Vec<String>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Key into the remedy table for a friction point.
fn dominant_key(log: &SessionLog, p: &FrictionPoint) -> String {
    if let Some(t) = dominant_tag(&p.tags) {
        return t.as_str().to_string();
    }
    let unresponsive = log.records.iter().find(|r| r.step_index == p.step_index).is_some_and(|r| {
        let o = &r.action_outcome;
        o.kind == OutcomeKind::Failed || (o.kind == OutcomeKind::Applied && !o.state_changed && !r.action.is_terminate())
    });
    if unresponsive { "unresponsive" } else { "untagged" }.to_string()
}

/// Builds the report document. Analyst notes, when given, replace the
/// templated diagnosis and recommendation of the points they cover.
pub fn generate_report(
    log: &SessionLog,
    friction: &[FrictionPoint],
    notes: Option<&[AnalystNote]>,
    remedies: &Remedies,
) -> Result<UxReport, ReportError> {
    let terminal = log.terminal.as_ref().ok_or(ReportError::NotTerminated)?;
    let sus = log.sus.as_ref().ok_or(ReportError::MissingSus)?;
    let s = &sus.seq_summary;
    let note_for = |step: u32| notes.and_then(|n| n.iter().find(|x| x.step_index == step));

    let steps = log
        .records
        .iter()
        .map(|r| ReportStep {
            index: r.step_index,
            action: r.action.to_string(),
            outcome: r.action_outcome.describe(),
            element: element_descriptor(r),
            seq: r.assessment.seq.get(),
            class: classify_step(r.assessment.seq).as_str().to_string(),
            tags: r.assessment.friction_tags.iter().map(|t| t.as_str().to_string()).collect(),
        })
        .collect();

    let mut friction_map = Vec::new();
    let mut recommendations = Vec::new();
    for p in friction {
        let dominant = dominant_key(log, p);
        let note = note_for(p.step_index);
        friction_map.push(ReportFriction {
            step: p.step_index,
            seq: p.seq.get(),
            element: p.element_descriptor.clone(),
            dominant: dominant.clone(),
            tags: p.tags.iter().map(|t| t.as_str().to_string()).collect(),
            excerpt: p.think_aloud_excerpt.clone(),
            diagnosis: note.map_or_else(|| p.diagnosis.clone(), |n| n.diagnosis.clone()),
        });
        recommendations.push(match note {
            Some(n) => Recommendation { step: p.step_index, text: n.recommendation.clone(), source: "model".into() },
            None => Recommendation {
                step: p.step_index,
                text: format!(
                    "At step {}, {}: {}; consider {}",
                    p.step_index,
                    p.element_descriptor,
                    dominant,
                    remedies.get(&dominant)
                ),
                source: "template".into(),
            },
        });
    }

    let (lo, hi) = sus.grade.percentile_range();
    let engines = [
        ("reasoning", &log.header.engine_config.reasoning),
        ("ux", &log.header.engine_config.ux),
        ("checklist", &log.header.engine_config.checklist),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.clone()))
    .collect();

    Ok(UxReport {
        schema_version: REPORT_SCHEMA_VERSION,
        session_id: log.header.session_id.clone(),
        created_at: log.header.created_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        task: ReportTask { url: log.header.task.target_url.to_string(), description: log.header.task.task_description.clone() },
        engines,
        outcome: ReportOutcome {
            status: terminal.status.as_str().to_string(),
            reason: terminal.reason.clone(),
            steps: log.records.len() as u32,
        },
        roadmap: log.roadmap.as_ref().map(|r| r.sentences.clone()).unwrap_or_default(),
        checklist: log.current_checklist().map(|c| c.items.clone()).unwrap_or_default(),
        steps,
        seq: ReportSeq {
            mean: round2(s.mean),
            sum: s.sum,
            count: s.count,
            min: s.min.get(),
            good_experience: s.good_experience,
            good_experience_mean: GOOD_EXPERIENCE_MEAN,
            friction_threshold: SEQ_FRICTION_THRESHOLD,
            success_threshold: SEQ_SUCCESS_THRESHOLD,
            trajectory: log.records.iter().map(|r| r.assessment.seq.get()).collect(),
            friction_steps: s.friction_steps.clone(),
            success_steps: s.success_steps.clone(),
        },
        friction_map,
        sus: ReportSus {
            score: sus.score.value(),
            grade: sus.grade,
            percentile_range: [lo, hi],
            responses: sus.responses.items().to_vec(),
            mode: sus.mode.as_str().to_string(),
            downgraded: sus.downgraded,
        },
        recommendations,
        warnings: log.warnings.clone(),
    })
}

impl UxReport {
    /// Canonical JSON bytes (pretty-printed, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

fn bar(seq: u8) -> String {
    "#".repeat(seq as usize)
}

/// Human-readable report. Every figure printed here is read from `r`.
pub fn render_markdown(r: &UxReport) -> String {
    let mut out = String::new();
    let o = &mut out;
    let _ = writeln!(o, "# UX report: {}\n", r.task.url);
    let _ = writeln!(o, "- Task: {}", r.task.description);
    let _ = writeln!(o, "- Session: `{}` ({})", r.session_id, r.created_at);
    let engines: Vec<String> = r.engines.iter().map(|(k, v)| format!("{k} `{v}`")).collect();
    let _ = writeln!(o, "- Engines: {}", engines.join(", "));
    let _ = writeln!(o, "- Outcome: **{}** after {} steps ({})", r.outcome.status, r.outcome.steps, r.outcome.reason);

    let _ = writeln!(o, "\n## Summary\n");
    let verdict = if r.seq.good_experience { "good experience" } else { "below the good-experience bar" };
    let _ = writeln!(
        o,
        "- SUS: **{:?}** (grade **{}**, percentile range {}-{}, {} synthesis{})",
        r.sus.score,
        r.sus.grade,
        r.sus.percentile_range[0],
        r.sus.percentile_range[1],
        r.sus.mode,
        if r.sus.downgraded { ", downgraded from model" } else { "" }
    );
    let _ = writeln!(o, "- SEQ mean: **{:?}** ({} / {}), minimum {}", r.seq.mean, r.seq.sum, r.seq.count, r.seq.min);
    let _ = writeln!(o, "- Verdict: {verdict} (mean {:?} or higher counts as good)", r.seq.good_experience_mean);
    let answers: Vec<String> = r.sus.responses.iter().map(u8::to_string).collect();
    let _ = writeln!(o, "- SUS answers: {}", answers.join(" "));

    if !r.roadmap.is_empty() {
        let _ = writeln!(o, "\n## Roadmap\n");
        for s in &r.roadmap {
            let _ = writeln!(o, "- {s}");
        }
    }

    if !r.checklist.is_empty() {
        let _ = writeln!(o, "\n## Checklist\n");
        for c in &r.checklist {
            let _ = writeln!(o, "- [{}] {}", c.status, c.text);
        }
    }

    let _ = writeln!(o, "\n## Steps\n");
    let _ = writeln!(o, "| Step | Action | Element | Outcome | SEQ | Class | Tags |");
    let _ = writeln!(o, "|---|---|---|---|---|---|---|");
    for s in &r.steps {
        let _ = writeln!(
            o,
            "| {} | `{}` | {} | {} | {} | {} | {} |",
            s.index,
            cell(&s.action),
            cell(&s.element),
            cell(&s.outcome),
            s.seq,
            s.class,
            s.tags.join(", ")
        );
    }

    let _ = writeln!(o, "\n## SEQ trajectory\n");
    let _ = writeln!(
        o,
        "Friction at SEQ {:?} or below, success at {:?} or above.\n",
        r.seq.friction_threshold, r.seq.success_threshold
    );
    let _ = writeln!(o, "```");
    for (s, seq) in r.steps.iter().zip(&r.seq.trajectory) {
        let _ = writeln!(o, "{:>3} {:<7} {} {}", s.index, bar(*seq), seq, s.class);
    }
    let _ = writeln!(o, "```");

    let _ = writeln!(o, "\n## Friction map\n");
    if r.friction_map.is_empty() {
        let _ = writeln!(o, "No friction detected: no step was rated at or below the friction threshold.");
    } else {
        for f in &r.friction_map {
            let _ = writeln!(o, "### Step {} (SEQ {}): {}\n", f.step, f.seq, f.element);
            let _ = writeln!(o, "- Dominant: {}", f.dominant);
            if !f.tags.is_empty() {
                let _ = writeln!(o, "- Tags: {}", f.tags.join(", "));
            }
            let _ = writeln!(o, "- Diagnosis: {}", f.diagnosis);
            let _ = writeln!(o, "- Think-aloud: \"{}\"\n", f.excerpt);
        }
    }

    let _ = writeln!(o, "\n## Recommendations\n");
    if r.recommendations.is_empty() {
        let _ = writeln!(o, "None.");
    }
    for rec in &r.recommendations {
        match rec.source.as_str() {
            "model" => {
                let _ = writeln!(o, "- Step {}: {}", rec.step, rec.text);
            }
            _ => {
                let _ = writeln!(o, "- {}", rec.text);
            }
        }
    }

    if !r.warnings.is_empty() {
        let _ = writeln!(o, "\n## Warnings\n");
        for w in &r.warnings {
            let _ = writeln!(o, "- {w}");
        }
    }
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes `report.json` and `report.md` into `dir`, each atomically.
pub fn write_reports(report: &UxReport, dir: &Path) -> io::Result<()> {
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&dir.join("report.md"), render_markdown(report).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate_seq, compute_sus, grade_sus, Rating7, SusResponses};
    use crate::session::tests::{checklist, header, record};
    use crate::session::{ActionOutcome, FrictionTag, SusSynthesis, SynthesisMode, TargetElement, Terminal, TerminalStatus};
    use crate::synthesis::build_friction_map;
    use regex::Regex;

    fn log(seqs: &[i64]) -> SessionLog {
        let mut log = SessionLog::new(header());
        log.initial_checklist = Some(checklist());
        for (i, &s) in seqs.iter().enumerate() {
            log.append_record(record(i as u32 + 1, s, checklist())).unwrap();
        }
        log.terminal = Some(Terminal { status: TerminalStatus::Success, reason: "done".into() });
        let responses = SusResponses::new(&[3, 3, 3, 2, 4, 3, 3, 4, 3, 2]).unwrap();
        let score = compute_sus(&responses);
        log.sus = Some(SusSynthesis {
            responses,
            score,
            grade: grade_sus(score),
            mode: SynthesisMode::Model,
            downgraded: false,
            seq_summary: aggregate_seq(&log.seq_series()).unwrap(),
        });
        log
    }

    fn recreation() -> SessionLog {
        let mut l = log(&[7, 7, 7, 1, 2, 6, 7, 6, 1, 1, 1, 7, 6, 3]);
        let r = &mut l.records[3];
        r.action_outcome = ActionOutcome::applied(false);
        r.target = Some(TargetElement { tag_id: 31, role: "button".into(), label: "14".into() });
        r.assessment.friction_tags.insert(FrictionTag::Retrying);
        l.records[4].assessment.seq = Rating7::new(2).unwrap();
        l
    }

    #[test]
    fn recreation_summary() {
        let l = recreation();
        let r = generate_report(&l, &build_friction_map(&l), None, Remedies::builtin()).unwrap();
        assert_eq!(r.sus.score, 55.0);
        assert_eq!(r.sus.grade, CgsGrade::D);
        assert_eq!(r.friction_map.len(), 6);
        assert_eq!(r.seq.mean, 4.43);
        assert!(!r.seq.good_experience);
        assert_eq!(r.recommendations.len(), 6);
        assert!(r.recommendations[0].text.starts_with("At step 4, button \"14\": retrying; consider"));
        assert_eq!(r.friction_map[1].dominant, "untagged");
        let md = render_markdown(&r);
        assert!(md.contains("SUS: **55.0**") && md.contains("grade **D**"));
    }

    #[test]
    fn no_friction_section() {
        let l = log(&[7, 7, 7]);
        let r = generate_report(&l, &build_friction_map(&l), None, Remedies::builtin()).unwrap();
        assert!(r.friction_map.is_empty() && r.recommendations.is_empty());
        assert!(render_markdown(&r).contains("No friction detected"));
    }

    #[test]
    fn missing_sus() {
        let mut l = log(&[5]);
        l.sus = None;
        assert!(matches!(generate_report(&l, &[], None, Remedies::builtin()), Err(ReportError::MissingSus)));
    }

    #[test]
    fn analyst_notes_replace_templates() {
        let l = recreation();
        let notes = [AnalystNote { step_index: 4, diagnosis: "The date cell ignores clicks.".into(), recommendation: "Fix the cell.".into() }];
        let r = generate_report(&l, &build_friction_map(&l), Some(&notes), Remedies::builtin()).unwrap();
        assert_eq!(r.friction_map[0].diagnosis, "The date cell ignores clicks.");
        assert_eq!(r.recommendations[0].source, "model");
        assert_eq!(r.recommendations[1].source, "template");
    }

    #[test]
    fn markdown_numbers_come_from_json() {
        let number = Regex::new(r"\d+(?:\.\d+)?").unwrap();
        for l in [recreation(), log(&[7, 7, 7]), log(&[4, 2, 6, 5, 1])] {
            let r = generate_report(&l, &build_friction_map(&l), None, Remedies::builtin()).unwrap();
            let json = r.to_json();
            let known: std::collections::HashSet<&str> = number.find_iter(&json).map(|m| m.as_str()).collect();
            let md = render_markdown(&r);
            for m in number.find_iter(&md) {
                assert!(known.contains(m.as_str()), "markdown figure {} not in JSON", m.as_str());
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_roundtrips() {
        let l = recreation();
        let a = generate_report(&l, &build_friction_map(&l), None, Remedies::builtin()).unwrap();
        let b = generate_report(&l, &build_friction_map(&l), None, Remedies::builtin()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back: UxReport = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(render_markdown(&back), render_markdown(&a));
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let l = log(&[6, 7]);
        let r = generate_report(&l, &[], None, Remedies::builtin()).unwrap();
        write_reports(&r, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("report.json")).unwrap(), r.to_json());
        assert!(dir.path().join("report.md").exists());
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::DateTime;
use uxprobe_core::action::Action;
use uxprobe_core::browser::{Driver, DriverCapabilities, DriverCommand, DriverError, DriverOutcome, Snapshot};
use uxprobe_core::config::Config;
use uxprobe_core::metrics::Rating7;
use uxprobe_core::pipeline::{parts_from_config, run_config, run_session, RunOutcome};
use uxprobe_core::session::{load_session, ActionOutcome, ActionRecord, Checklist, LoadMode, SessionLog, StepAssessment};

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str, config: &str) -> Config {
    Config::load(fixture_dir(name).join(config)).unwrap_or_else(|e| panic!("{name}/{config}: {e}"))
}

pub struct Run {
    pub outcome: RunOutcome,
    pub dir: tempfile::TempDir,
}

impl Run {
    pub fn session_bytes(&self) -> Vec<u8> {
        std::fs::read(self.dir.path().join("session.jsonl")).unwrap()
    }

    pub fn report_bytes(&self) -> Vec<u8> {
        std::fs::read(self.dir.path().join("report.json")).unwrap()
    }
}

pub fn replay(name: &str, config: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_config(&load_fixture(name, config), dir.path()).unwrap_or_else(|e| panic!("{name}/{config}: {e}"));
    Run { outcome, dir }
}

/// Wraps a driver and records every input command it receives.
pub struct Recording {
    inner: Box<dyn Driver>,
    pub commands: Arc<Mutex<Vec<DriverCommand>>>,
}

impl Driver for Recording {
    fn capabilities(&self) -> DriverCapabilities {
        self.inner.capabilities()
    }
    fn open(&mut self, url: &str) -> Result<(), DriverError> {
        self.inner.open(url)
    }
    fn snapshot(&mut self) -> Result<Snapshot, DriverError> {
        self.inner.snapshot()
    }
    fn dispatch(&mut self, command: &DriverCommand) -> Result<DriverOutcome, DriverError> {
        self.commands.lock().unwrap().push(command.clone());
        self.inner.dispatch(command)
    }
}

/// Replays a fixture and returns the driver commands that were dispatched.
pub fn replay_recording(name: &str, config: &str) -> (RunOutcome, Vec<DriverCommand>) {
    let cfg = load_fixture(name, config);
    let mut parts = parts_from_config(&cfg).unwrap();
    let commands = Arc::new(Mutex::new(Vec::new()));
    let inner = std::mem::replace(&mut parts.driver, Box::new(Null));
    parts.driver = Box::new(Recording { inner, commands: commands.clone() });
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_session(parts, &cfg, dir.path()).unwrap();
    let commands = commands.lock().unwrap().clone();
    (outcome, commands)
}

struct Null;

impl Driver for Null {
    fn capabilities(&self) -> DriverCapabilities {
        DriverCapabilities::FULL
    }
    fn open(&mut self, _url: &str) -> Result<(), DriverError> {
        Err(DriverError::PageGone)
    }
    fn snapshot(&mut self) -> Result<Snapshot, DriverError> {
        Err(DriverError::PageGone)
    }
    fn dispatch(&mut self, _command: &DriverCommand) -> Result<DriverOutcome, DriverError> {
        Err(DriverError::PageGone)
    }
}

/// Checks a session file independently of the loader: step indices run
/// 1..=n and consecutive checklists differ in at most one status.
pub fn check_log_integrity(path: &Path) -> Result<SessionLog, String> {
    let log = load_session(path, LoadMode::Strict).map_err(|e| e.to_string())?.log;
    let mut prev = log.initial_checklist.clone().ok_or("no initial checklist")?;
    for (i, r) in log.records.iter().enumerate() {
        if r.step_index as usize != i + 1 {
            return Err(format!("record {} has step_index {}", i + 1, r.step_index));
        }
        let next = &r.checklist_after;
        if next.items.len() != prev.items.len() {
            return Err(format!("step {}: checklist length changed", r.step_index));
        }
        let changed = prev.items.iter().zip(&next.items).filter(|(a, b)| a.status != b.status || a.text != b.text).count();
        if changed > 1 {
            return Err(format!("step {}: {changed} checklist items changed", r.step_index));
        }
        prev = next.clone();
    }
    if log.terminal.is_none() {
        return Err("session has no terminal line".into());
    }
    Ok(log)
}

/// A minimal valid record with the given step scores `[seq, eff, cla, con]`.
pub fn record(step: u32, scores: [u8; 4]) -> ActionRecord {
    let r = |v: u8| Rating7::new(v as i64).unwrap();
    ActionRecord {
        step_index: step,
        think_aloud: "looking around".into(),
        action: Action::Click { x: 500, y: 500 },
        action_outcome: ActionOutcome::applied(true),
        assessment: StepAssessment {
            seq: r(scores[0]),
            efficiency: r(scores[1]),
            clarity: r(scores[2]),
            confidence: r(scores[3]),
            efficiency_note: "ok".into(),
            clarity_note: "ok".into(),
            confidence_note: "ok".into(),
            friction_tags: Default::default(),
        },
        observation_ref: "0".repeat(64),
        checklist_after: Checklist::from_texts(&["first milestone", "second milestone"]).unwrap(),
        timestamp: DateTime::UNIX_EPOCH,
        latency_ms: 0,
        target: None,
        raw_decision: String::new(),
        raw_assessment: String::new(),
    }
}

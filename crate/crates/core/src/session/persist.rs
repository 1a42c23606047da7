//! Line-delimited session files.
//!
//! One JSON object per line, tagged by `kind`. The first line is always the
//! `header`. Records are appended and synced one at a time while a session
//! runs, so a crash leaves at worst a truncated final line, which the
//! salvage loader skips.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ActionRecord, AnalystNote, Checklist, IntegrityError, SessionHeader, SessionLog, SusSynthesis, Terminal, SESSION_SCHEMA_VERSION,
};
use crate::gateway::ModelCallRecord;
use crate::roadmap::EipRoadmap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header(SessionHeader),
    Warning { message: String },
    Roadmap(EipRoadmap),
    Checklist { checklist: Checklist },
    ModelCall(ModelCallRecord),
    Record(ActionRecord),
    Terminal(Terminal),
    Synthesis(SusSynthesis),
    Analyst { notes: Vec<AnalystNote> },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read session file: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: {source}")]
    Integrity { line: usize, source: IntegrityError },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("session file is empty")]
    Empty,
}

impl LoadError {
    pub fn line(&self) -> Option<usize> {
        match self {
            LoadError::Parse { line, .. }
            | LoadError::Invalid { line, .. }
            | LoadError::Integrity { line, .. }
            | LoadError::Structure { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    #[default]
    Strict,
    /// Stop at the first unparseable line and keep everything before it.
    Salvage,
}

#[derive(Debug)]
pub struct LoadedSession {
    pub log: SessionLog,
    /// Set in salvage mode when trailing lines were dropped.
    pub salvaged: Option<LoadError>,
}

pub fn load_session(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedSession, LoadError> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut builder: Option<SessionLog> = None;
    let mut salvaged = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<LogLine>(&line).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Data => LoadError::Invalid { line: lineno, message: e.to_string() },
                _ => LoadError::Parse { line: lineno, message: e.to_string() },
            }
        });
        let entry = match parsed {
            Ok(entry) => entry,
            Err(err) if mode == LoadMode::Salvage && builder.is_some() => {
                log::warn!("salvage: dropping session lines from {lineno} on: {err}");
                salvaged = Some(err);
                break;
            }
            Err(err) => return Err(err),
        };
        match builder.as_mut() {
            None => match entry {
                LogLine::Header(h) => {
                    if h.schema_version != SESSION_SCHEMA_VERSION {
                        return Err(LoadError::Structure {
                            line: lineno,
                            message: format!("unsupported schema_version {}", h.schema_version),
                        });
                    }
                    h.task.validate().map_err(|e| LoadError::Invalid { line: lineno, message: e.to_string() })?;
                    builder = Some(SessionLog::new(h));
                }
                _ => return Err(LoadError::Structure { line: lineno, message: "first line must be the session header".into() }),
            },
            Some(log) => apply_line(log, entry, lineno)?,
        }
    }

    let log = builder.ok_or(LoadError::Empty)?;
    Ok(LoadedSession { log, salvaged })
}

fn apply_line(log: &mut SessionLog, entry: LogLine, line: usize) -> Result<(), LoadError> {
    let structure = |message: &str| LoadError::Structure { line, message: message.to_string() };
    match entry {
        LogLine::Header(_) => return Err(structure("duplicate session header")),
        LogLine::Warning { message } => log.warnings.push(message),
        LogLine::ModelCall(call) => log.model_calls.push(call),
        LogLine::Roadmap(r) => {
            if log.terminal.is_some() || !log.records.is_empty() {
                return Err(structure("roadmap must precede the first record"));
            }
            r.validate().map_err(|e| LoadError::Invalid { line, message: format!("roadmap: {e}") })?;
            log.roadmap = Some(r);
        }
        LogLine::Checklist { checklist } => {
            if log.initial_checklist.is_some() || !log.records.is_empty() {
                return Err(structure("initial checklist must appear once, before the first record"));
            }
            checklist.validate().map_err(|e| LoadError::Invalid { line, message: format!("checklist: {e}") })?;
            if let Some(i) = checklist.items.iter().position(|it| it.status != super::ChecklistStatus::Pending) {
                return Err(LoadError::Invalid { line, message: format!("checklist: item {} must start pending", i + 1) });
            }
            log.initial_checklist = Some(checklist);
        }
        LogLine::Record(record) => {
            if log.initial_checklist.is_none() {
                return Err(structure("record before the initial checklist"));
            }
            log.append_record(record).map_err(|source| LoadError::Integrity { line, source })?;
        }
        LogLine::Terminal(t) => {
            if log.terminal.is_some() {
                return Err(structure("duplicate terminal line"));
            }
            if log.records.is_empty() {
                return Err(structure("terminated session has no records"));
            }
            log.terminal = Some(t);
        }
        LogLine::Synthesis(s) => {
            if log.terminal.is_none() {
                return Err(structure("synthesis before terminal status"));
            }
            if log.sus.is_some() {
                return Err(structure("duplicate synthesis line"));
            }
            log.sus = Some(s);
        }
        LogLine::Analyst { notes } => {
            if log.sus.is_none() {
                return Err(structure("analyst notes before synthesis"));
            }
            if log.analyst.is_some() {
                return Err(structure("duplicate analyst line"));
            }
            log.analyst = Some(notes);
        }
    }
    Ok(())
}

/// All lines of a log, in file order.
pub fn session_lines(log: &SessionLog) -> Vec<LogLine> {
    let mut lines = vec![LogLine::Header(log.header.clone())];
    lines.extend(log.warnings.iter().map(|m| LogLine::Warning { message: m.clone() }));
    let mut calls = log.model_calls.iter().peekable();
    let mut calls_through = |step: u32, lines: &mut Vec<LogLine>| {
        while let Some(c) = calls.next_if(|c| c.step <= step) {
            lines.push(LogLine::ModelCall(c.clone()));
        }
    };
    calls_through(0, &mut lines);
    if let Some(r) = &log.roadmap {
        lines.push(LogLine::Roadmap(r.clone()));
    }
    if let Some(c) = &log.initial_checklist {
        lines.push(LogLine::Checklist { checklist: c.clone() });
    }
    for r in &log.records {
        calls_through(r.step_index, &mut lines);
        lines.push(LogLine::Record(r.clone()));
    }
    if let Some(t) = &log.terminal {
        lines.push(LogLine::Terminal(t.clone()));
    }
    calls_through(u32::MAX, &mut lines);
    if let Some(s) = &log.sus {
        lines.push(LogLine::Synthesis(s.clone()));
    }
    if let Some(notes) = &log.analyst {
        lines.push(LogLine::Analyst { notes: notes.clone() });
    }
    lines
}

/// Writes a whole log atomically (temp file + rename).
pub fn save_session(log: &SessionLog, path: impl AsRef<Path>) -> io::Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    for line in session_lines(log) {
        serde_json::to_writer(&mut tmp, &line)?;
        tmp.write_all(b"\n")?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Append-only writer used while a session runs. Every line is flushed and
/// synced before `write` returns.
pub struct SessionWriter {
    file: File,
    path: PathBuf,
}

impl SessionWriter {
    pub fn create(path: impl AsRef<Path>, header: &SessionHeader) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        let mut w = Self { file, path };
        w.write(&LogLine::Header(header.clone()))?;
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, line: &LogLine) -> io::Result<()> {
        let mut buf = serde_json::to_vec(line)?;
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}

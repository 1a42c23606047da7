//! Recomputes a session's metrics from its records and compares them with
//! the values stored in the log.

use std::fmt::Write as _;

use crate::metrics::{aggregate_seq, compute_sus, grade_sus, CgsGrade, MetricsError, SeqSummary, SusScore};
use crate::prompts::PromptSet;
use crate::session::SessionLog;
use crate::synthesis::{synthesize_sus, RuleOptions, SynthesisRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub seq: SeqSummary,
    /// Score and grade recomputed from the stored answers, or from the
    /// rule-based mapping when the log has no synthesis.
    pub sus: Option<(SusScore, CgsGrade, String)>,
    pub drift: Vec<String>,
}

pub fn audit_session(log: &SessionLog) -> Result<Audit, MetricsError> {
    let seq = aggregate_seq(&log.seq_series())?;
    let mut drift = Vec::new();
    let sus = match &log.sus {
        Some(stored) => {
            let score = compute_sus(&stored.responses);
            let grade = grade_sus(score);
            if score != stored.score {
                drift.push(format!("stored SUS {} but answers score {}", stored.score, score));
            }
            if grade != stored.grade {
                drift.push(format!("stored grade {} but score grades as {}", stored.grade, grade));
            }
            let s = &stored.seq_summary;
            if s.sum != seq.sum || s.count != seq.count {
                drift.push(format!("stored SEQ total {}/{} but records give {}/{}", s.sum, s.count, seq.sum, seq.count));
            }
            if s.min != seq.min {
                drift.push(format!("stored SEQ minimum {} but records give {}", s.min, seq.min));
            }
            if s.friction_steps != seq.friction_steps {
                drift.push(format!("stored friction steps {:?} but records give {:?}", s.friction_steps, seq.friction_steps));
            }
            if s.success_steps != seq.success_steps {
                drift.push(format!("stored success steps {:?} but records give {:?}", s.success_steps, seq.success_steps));
            }
            if s.good_experience != seq.good_experience {
                drift.push(format!("stored good_experience {} but records give {}", s.good_experience, seq.good_experience));
            }
            Some((score, grade, stored.mode.as_str().to_string()))
        }
        None if log.terminal.is_some() => {
            let r = synthesize_sus(log, SynthesisRequest::RuleBased, None, &PromptSet::builtin(), RuleOptions::default())
                .map_err(|_| MetricsError::NoAssessedSteps)?;
            Some((r.sus.score, r.sus.grade, "rule_based (recomputed, not stored)".to_string()))
        }
        None => None,
    };
    Ok(Audit { seq, sus, drift })
}

impl Audit {
    pub fn render(&self, log: &SessionLog) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "session {}", log.header.session_id);
        let _ = match &log.terminal {
            Some(t) => writeln!(o, "steps {} ({}: {})", log.records.len(), t.status.as_str(), t.reason),
            None => writeln!(o, "steps {} (not terminated)", log.records.len()),
        };
        let s = &self.seq;
        let _ = writeln!(o, "SEQ mean {:.2} ({}/{}), min {}", s.mean, s.sum, s.count, s.min);
        let _ = writeln!(o, "friction steps {:?}", s.friction_steps);
        let _ = writeln!(o, "good experience: {}", if s.good_experience { "yes" } else { "no" });
        let _ = match &self.sus {
            Some((score, grade, mode)) => writeln!(o, "SUS {score} grade {grade} ({mode})"),
            None => writeln!(o, "SUS not available (session not terminated)"),
        };
        for d in &self.drift {
            let _ = writeln!(o, "drift: {d}");
        }
        o
    }
}

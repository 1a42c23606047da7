use std::collections::VecDeque;

use super::guard::ActionSignature;
use crate::session::ActionRecord;

pub const DEFAULT_MEMORY_WINDOW: usize = 5;

/// Recent full records plus a one-sentence-per-step summary of older ones,
/// and the consecutive-repeat counter used by loop detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentMemory {
    window: usize,
    recent: VecDeque<ActionRecord>,
    summary: Vec<String>,
    last_signature: Option<ActionSignature>,
    repeat_count: u32,
    loop_warning: Option<String>,
}

impl AgentMemory {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::new(),
            summary: Vec::new(),
            last_signature: None,
            repeat_count: 0,
            loop_warning: None,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn recent(&self) -> impl Iterator<Item = &ActionRecord> {
        self.recent.iter()
    }

    pub fn summary(&self) -> &[String] {
        &self.summary
    }

    /// How many times in a row `sig` has just been executed.
    pub fn repeat_count(&self, sig: &ActionSignature) -> u32 {
        if self.last_signature.as_ref() == Some(sig) {
            self.repeat_count
        } else {
            0
        }
    }

    pub fn set_loop_warning(&mut self, note: Option<String>) {
        self.loop_warning = note;
    }

    pub fn loop_warning(&self) -> Option<&str> {
        self.loop_warning.as_deref()
    }

    pub fn push(&mut self, record: ActionRecord, signature: ActionSignature) {
        if self.last_signature.as_ref() == Some(&signature) {
            self.repeat_count += 1;
        } else {
            self.last_signature = Some(signature);
            self.repeat_count = 1;
        }
        self.recent.push_back(record);
        while self.recent.len() > self.window {
            self.fold_oldest();
        }
    }

    fn fold_oldest(&mut self) -> bool {
        match self.recent.pop_front() {
            Some(r) => {
                self.summary.push(summary_sentence(&r));
                true
            }
            None => false,
        }
    }

    /// Folds the oldest recent record into the summary, or merges the two
    /// oldest summary sentences when no records remain. Returns false when
    /// nothing is left to shrink.
    pub fn compress(&mut self) -> bool {
        if self.fold_oldest() {
            return true;
        }
        if self.summary.len() > 1 {
            let first = self.summary.remove(0);
            let second = self.summary.remove(0);
            self.summary.insert(0, format!("{} {}", first, second));
            // keep the merged line short so repeated compression converges
            let merged = &mut self.summary[0];
            if merged.chars().count() > 200 {
                *merged = format!("{}...", merged.chars().take(197).collect::<String>());
            }
            return true;
        }
        false
    }

    pub fn render(&self) -> String {
        if self.recent.is_empty() && self.summary.is_empty() {
            return "(nothing yet; this is the first step)".to_string();
        }
        let mut out = String::new();
        if !self.summary.is_empty() {
            out.push_str("Earlier:\n");
            for s in &self.summary {
                out.push_str(s);
                out.push('\n');
            }
        }
        if !self.recent.is_empty() {
            out.push_str("Recent steps:\n");
            for r in &self.recent {
                out.push_str(&format!(
                    "Step {}: thought \"{}\"; did {}; {}; SEQ {}.\n",
                    r.step_index,
                    r.think_aloud,
                    r.action,
                    r.action_outcome.describe(),
                    r.assessment.seq
                ));
            }
        }
        out.trim_end().to_string()
    }
}

fn summary_sentence(r: &ActionRecord) -> String {
    format!("Step {}: {} -> {} (SEQ {}).", r.step_index, r.action, r.action_outcome.describe(), r.assessment.seq)
}

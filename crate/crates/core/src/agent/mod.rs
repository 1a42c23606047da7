//! The closed-loop agent: memory, guards, and the per-step model exchanges.

mod assess;
mod decide;
mod guard;
mod memory;

pub use assess::{assess_step, parse_assessment, AssessError, AssessInput, Assessed};
pub use decide::{decide_step, parse_decision, DecideInput, Decision, INVALID_OUTPUT_REASON};
pub use guard::{
    detect_loop, enforce_policy, login_ui_present, ActionSignature, LoopConfig, LoopVerdict, LOGIN_PROHIBITED_REASON,
    LOOP_BREAK_REASON,
};
pub use memory::{AgentMemory, DEFAULT_MEMORY_WINDOW};

use crate::grounding::Observation;

/// One-line page description used in prompts.
pub fn describe_page(obs: &Observation) -> String {
    let title = if obs.page_title.is_empty() { "(untitled)" } else { obs.page_title.as_str() };
    format!("{title} <{}> scrolled to y={}", obs.page_url, obs.scroll_offset.1)
}

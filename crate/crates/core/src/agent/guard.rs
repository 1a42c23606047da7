//! Checks applied to every decision before it reaches the browser.

use std::sync::LazyLock;

use regex::Regex;

use super::memory::AgentMemory;
use crate::action::{Action, TerminateStatus};
use crate::grounding::Observation;
use crate::session::PolicyFlags;

pub const LOGIN_PROHIBITED_REASON: &str = "login prohibited";
pub const LOOP_BREAK_REASON: &str = "repetitive loop detected";

static LOGIN_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(sign|log)[\s-]?in\b").expect("valid login regex"));

/// True when the observation shows credential UI: a password field or an
/// element labelled "sign in" / "log in" (any case, optional space or hyphen).
pub fn login_ui_present(obs: &Observation) -> bool {
    obs.elements.iter().any(|e| {
        e.input_type.as_deref().is_some_and(|t| t.eq_ignore_ascii_case("password")) || LOGIN_LABEL.is_match(&e.label)
    })
}

/// Replaces the action with a failing terminate when login is prohibited
/// and credential UI is on screen.
pub fn enforce_policy(obs: &Observation, action: Action, policy: &PolicyFlags) -> Action {
    if policy.login_prohibited && login_ui_present(obs) {
        Action::terminate(TerminateStatus::Failure, LOGIN_PROHIBITED_REASON)
    } else {
        action
    }
}

/// Identity of an action for repeat counting: verb, coordinates snapped to
/// a grid, the element it lands on, and any argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionSignature {
    verb: &'static str,
    cell: Option<(u16, u16)>,
    target: Option<u32>,
    argument: String,
}

impl ActionSignature {
    pub fn of(action: &Action, target: Option<u32>, grid: u16) -> Self {
        let grid = grid.max(1);
        let argument = match action {
            Action::Type { text, .. } => text.clone(),
            Action::Scroll { direction } => format!("{direction:?}"),
            Action::Select { tag_id, option } => format!("{tag_id}:{option}"),
            Action::Terminate { status, reason } => format!("{status:?}:{reason}"),
            Action::Click { .. } | Action::Hover { .. } => String::new(),
        };
        Self { verb: action.verb(), cell: action.point().map(|p| (p.x / grid, p.y / grid)), target, argument }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopConfig {
    pub warn_after: u32,
    pub break_after: u32,
    pub grid: u16,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { warn_after: 3, break_after: 5, grid: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopVerdict {
    Ok,
    /// Let the action run but warn in the next prompt.
    Warn { count: u32 },
    /// Stop the session.
    Break { count: u32 },
}

/// Counts the candidate action together with its identical predecessors.
pub fn detect_loop(memory: &AgentMemory, signature: &ActionSignature, config: &LoopConfig) -> LoopVerdict {
    let count = memory.repeat_count(signature) + 1;
    if count >= config.break_after {
        LoopVerdict::Break { count }
    } else if count >= config.warn_after {
        LoopVerdict::Warn { count }
    } else {
        LoopVerdict::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{ElementRole, GroundedElement, NormRect, Viewport};
    use crate::session::tests::{checklist, record};

    fn obs(elements: Vec<(&str, Option<&str>)>) -> Observation {
        Observation {
            screenshot_ref: String::new(),
            elements: elements
                .into_iter()
                .enumerate()
                .map(|(i, (label, input_type))| GroundedElement {
                    tag_id: i as u32 + 1,
                    role: ElementRole::Button,
                    label: label.into(),
                    bbox_norm: NormRect { x: 0, y: 0, w: 10, h: 10 },
                    occluded: false,
                    element_ref: format!("e{i}"),
                    input_type: input_type.map(str::to_string),
                    options: vec![],
                })
                .collect(),
            viewport: Viewport::default(),
            scroll_offset: (0, 0),
            page_url: "https://a.test/".into(),
            page_title: String::new(),
        }
    }

    #[test]
    fn password_field_terminates() {
        let a = enforce_policy(&obs(vec![("", Some("password"))]), Action::Click { x: 1, y: 1 }, &PolicyFlags::default());
        assert_eq!(a, Action::terminate(TerminateStatus::Failure, "login prohibited"));
    }

    #[test]
    fn login_labels() {
        for label in ["Sign in", "LOG IN", "Log-in", "Login", "signin to continue"] {
            assert!(login_ui_present(&obs(vec![(label, None)])), "{label}");
        }
        for label in ["Accept All", "Blogging tips", "Signing up", "Designing"] {
            assert!(!login_ui_present(&obs(vec![(label, None)])), "{label}");
        }
    }

    #[test]
    fn policy_disabled_passes_through() {
        let off = PolicyFlags { login_prohibited: false };
        let click = Action::Click { x: 1, y: 1 };
        assert_eq!(enforce_policy(&obs(vec![("Login", None)]), click.clone(), &off), click);
        let cookie = Action::Click { x: 500, y: 900 };
        assert_eq!(enforce_policy(&obs(vec![("Accept All", None)]), cookie.clone(), &PolicyFlags::default()), cookie);
    }

    #[test]
    fn loop_thresholds() {
        let cfg = LoopConfig::default();
        let click = Action::Click { x: 500, y: 500 };
        let sig = ActionSignature::of(&click, Some(3), cfg.grid);
        let mut m = AgentMemory::new(5);
        let mut verdicts = vec![];
        for step in 1..=5 {
            verdicts.push(detect_loop(&m, &sig, &cfg));
            m.push(record(step, 1, checklist()), sig.clone());
        }
        assert_eq!(
            verdicts,
            vec![LoopVerdict::Ok, LoopVerdict::Ok, LoopVerdict::Warn { count: 3 }, LoopVerdict::Warn { count: 4 }, LoopVerdict::Break { count: 5 }]
        );
    }

    #[test]
    fn nearby_coordinates_share_a_cell_and_alternation_is_fine() {
        let a = ActionSignature::of(&Action::Click { x: 500, y: 500 }, None, 20);
        assert_eq!(a, ActionSignature::of(&Action::Click { x: 519, y: 505 }, None, 20));
        assert_ne!(a, ActionSignature::of(&Action::Click { x: 520, y: 505 }, None, 20));
        let b = ActionSignature::of(&Action::Click { x: 100, y: 100 }, None, 20);
        let mut m = AgentMemory::new(5);
        for step in 1..=10 {
            let s = if step % 2 == 0 { &a } else { &b };
            assert_eq!(detect_loop(&m, s, &LoopConfig::default()), LoopVerdict::Ok);
            m.push(record(step, 4, checklist()), s.clone());
        }
    }
}

//! Browser actions in the normalized 1000x1000 space, and the plain-text
//! action grammar models answer with.
//!
//! ```text
//! click(x, y)            click [x, y]
//! hover(x, y)
//! type(x, y, "text")
//! scroll(up) | scroll(down) | scroll_bottom
//! select(tag_id, "option label")
//! terminate(success|failure, "reason")
//! ```
//!
//! Verbs are case-insensitive. `goto`/`navigate` are always rejected.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{ElementRole, NormPoint, Observation, ACTION_SPACE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
    ToBottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Click { x: u16, y: u16 },
    Hover { x: u16, y: u16 },
    Type { x: u16, y: u16, text: String },
    Scroll { direction: ScrollDirection },
    Select { tag_id: u32, option: String },
    Terminate { status: TerminateStatus, reason: String },
}

impl Action {
    pub fn terminate(status: TerminateStatus, reason: impl Into<String>) -> Self {
        Action::Terminate { status, reason: reason.into() }
    }

    pub fn verb(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::Hover { .. } => "hover",
            Action::Type { .. } => "type",
            Action::Scroll { .. } => "scroll",
            Action::Select { .. } => "select",
            Action::Terminate { .. } => "terminate",
        }
    }

    pub fn point(&self) -> Option<NormPoint> {
        match *self {
            Action::Click { x, y } | Action::Hover { x, y } | Action::Type { x, y, .. } => Some(NormPoint { x, y }),
            _ => None,
        }
    }

    pub fn is_terminate(&self) -> bool {
        matches!(self, Action::Terminate { .. })
    }

    /// Checks the action against the elements it would act on.
    pub fn validate_against(&self, obs: &Observation) -> Result<(), ActionError> {
        match self {
            Action::Click { x, y } => {
                if let Some(e) = obs.element_at(NormPoint { x: *x, y: *y }) {
                    if e.role == ElementRole::Select {
                        return Err(ActionError::SelectViaClick { tag_id: e.tag_id });
                    }
                }
                Ok(())
            }
            Action::Select { tag_id, option } => {
                let e = obs.element(*tag_id).ok_or(ActionError::UnknownTag(*tag_id))?;
                if e.role != ElementRole::Select {
                    return Err(ActionError::NotSelectable { tag_id: *tag_id, role: e.role.as_str() });
                }
                if !e.options.is_empty() && !e.options.iter().any(|o| o == option) {
                    return Err(ActionError::UnknownOption { tag_id: *tag_id, option: option.clone() });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click { x, y } => write!(f, "click({x}, {y})"),
            Action::Hover { x, y } => write!(f, "hover({x}, {y})"),
            Action::Type { x, y, text } => write!(f, "type({x}, {y}, {})", quote(text)),
            Action::Scroll { direction: ScrollDirection::Up } => write!(f, "scroll(up)"),
            Action::Scroll { direction: ScrollDirection::Down } => write!(f, "scroll(down)"),
            Action::Scroll { direction: ScrollDirection::ToBottom } => write!(f, "scroll_bottom"),
            Action::Select { tag_id, option } => write!(f, "select({tag_id}, {})", quote(option)),
            Action::Terminate { status, reason } => {
                let s = match status {
                    TerminateStatus::Success => "success",
                    TerminateStatus::Failure => "failure",
                };
                write!(f, "terminate({s}, {})", quote(reason))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("no action found in model output")]
    Empty,
    #[error("unknown action verb `{0}`")]
    UnknownVerb(String),
    #[error("GOTO/URL navigation is not allowed; interact with the page instead")]
    GotoForbidden,
    #[error("`{verb}` requires integer [x, y] coordinates in the 1000x1000 screen space")]
    MissingCoordinates { verb: String },
    #[error("coordinate ({x}, {y}) is outside the 1000x1000 screen space")]
    CoordinateOutOfRange { x: i64, y: i64 },
    #[error("malformed `{verb}` arguments: {detail}")]
    BadArguments { verb: String, detail: String },
    #[error("element [{tag_id}] is a dropdown; use select(tag_id, \"option\") instead of click")]
    SelectViaClick { tag_id: u32 },
    #[error("no element tagged [{0}] in the current observation")]
    UnknownTag(u32),
    #[error("element [{tag_id}] is a {role}, not a dropdown")]
    NotSelectable { tag_id: u32, role: &'static str },
    #[error("dropdown [{tag_id}] has no option `{option}`")]
    UnknownOption { tag_id: u32, option: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Int(i64),
    Word(String),
    Text(String),
    Other(String),
}

impl Arg {
    fn describe(&self) -> String {
        match self {
            Arg::Int(i) => i.to_string(),
            Arg::Word(w) | Arg::Other(w) => w.clone(),
            Arg::Text(t) => quote(t),
        }
    }

    fn as_text(&self) -> Option<String> {
        match self {
            Arg::Text(t) | Arg::Word(t) => Some(t.clone()),
            Arg::Int(i) => Some(i.to_string()),
            Arg::Other(_) => None,
        }
    }
}

fn split_args(body: &str, verb: &str) -> Result<Vec<Arg>, ActionError> {
    let bad = |detail: &str| ActionError::BadArguments { verb: verb.to_string(), detail: detail.to_string() };
    let mut args = Vec::new();
    let mut chars = body.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&c) = chars.peek() else { break };
        if c == '"' || c == '\'' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some(ch) = chars.next() {
                if ch == '\\' {
                    if let Some(n) = chars.next() {
                        s.push(n);
                    }
                } else if ch == c {
                    closed = true;
                    break;
                } else {
                    s.push(ch);
                }
            }
            if !closed {
                return Err(bad("unterminated string"));
            }
            args.push(Arg::Text(s));
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch == ',' {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            let tok = tok.trim().to_string();
            if tok.is_empty() {
                return Err(bad("empty argument"));
            }
            if let Ok(i) = tok.parse::<i64>() {
                args.push(Arg::Int(i));
            } else if tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                args.push(Arg::Word(tok));
            } else {
                args.push(Arg::Other(tok));
            }
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some(',') => continue,
            Some(_) => return Err(bad("expected `,` between arguments")),
        }
    }
    Ok(args)
}

fn coordinate(verb: &str, args: &[Arg]) -> Result<(u16, u16), ActionError> {
    match args {
        [Arg::Int(x), Arg::Int(y), ..] => {
            let range = 0..=ACTION_SPACE as i64;
            if range.contains(x) && range.contains(y) {
                Ok((*x as u16, *y as u16))
            } else {
                Err(ActionError::CoordinateOutOfRange { x: *x, y: *y })
            }
        }
        [Arg::Other(a), Arg::Other(_) | Arg::Int(_), ..] | [Arg::Int(_), Arg::Other(a), ..] => Err(ActionError::BadArguments {
            verb: verb.to_string(),
            detail: format!("coordinates must be integers, got `{a}`"),
        }),
        _ => Err(ActionError::MissingCoordinates { verb: verb.to_string() }),
    }
}

fn expect_len(verb: &str, args: &[Arg], n: usize) -> Result<(), ActionError> {
    if args.len() != n {
        return Err(ActionError::BadArguments {
            verb: verb.to_string(),
            detail: format!("expected {n} arguments, got {}", args.len()),
        });
    }
    Ok(())
}

/// Parses one action expression such as `click(234, 550)`.
pub fn parse_action(input: &str) -> Result<Action, ActionError> {
    let s = input.trim().trim_matches('`').trim();
    if s.is_empty() {
        return Err(ActionError::Empty);
    }
    let verb_end = s.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(s.len());
    let verb = s[..verb_end].to_ascii_lowercase();
    if verb.is_empty() {
        return Err(ActionError::UnknownVerb(s.chars().take(20).collect()));
    }
    let rest = s[verb_end..].trim();
    let body = if rest.is_empty() {
        ""
    } else if let Some(b) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        b
    } else if let Some(b) = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        b
    } else {
        // `click 234, 550`
        rest
    };

    if matches!(verb.as_str(), "goto" | "navigate" | "open_url" | "visit") {
        return Err(ActionError::GotoForbidden);
    }
    let args = split_args(body, &verb)?;

    match verb.as_str() {
        "click" | "hover" => {
            let (x, y) = coordinate(&verb, &args)?;
            expect_len(&verb, &args, 2)?;
            Ok(if verb == "click" { Action::Click { x, y } } else { Action::Hover { x, y } })
        }
        "type" => {
            let (x, y) = coordinate(&verb, &args)?;
            expect_len(&verb, &args, 3)?;
            match &args[2] {
                Arg::Text(t) => Ok(Action::Type { x, y, text: t.clone() }),
                other => Err(ActionError::BadArguments {
                    verb,
                    detail: format!("text must be quoted, got `{}`", other.describe()),
                }),
            }
        }
        "scroll" => {
            expect_len(&verb, &args, 1)?;
            let dir = match &args[0] {
                Arg::Word(w) | Arg::Text(w) => w.to_ascii_lowercase(),
                other => return Err(ActionError::BadArguments { verb, detail: format!("bad direction `{}`", other.describe()) }),
            };
            let direction = match dir.as_str() {
                "up" => ScrollDirection::Up,
                "down" => ScrollDirection::Down,
                "bottom" | "to_bottom" => ScrollDirection::ToBottom,
                _ => return Err(ActionError::BadArguments { verb, detail: format!("bad direction `{dir}`") }),
            };
            Ok(Action::Scroll { direction })
        }
        "scroll_up" | "scroll_down" | "scroll_bottom" | "scroll_to_bottom" => {
            expect_len(&verb, &args, 0)?;
            let direction = match verb.as_str() {
                "scroll_up" => ScrollDirection::Up,
                "scroll_down" => ScrollDirection::Down,
                _ => ScrollDirection::ToBottom,
            };
            Ok(Action::Scroll { direction })
        }
        "select" => {
            expect_len(&verb, &args, 2)?;
            let tag_id = match &args[0] {
                Arg::Int(t) if *t > 0 && *t <= u32::MAX as i64 => *t as u32,
                other => return Err(ActionError::BadArguments { verb, detail: format!("expected a tag id, got `{}`", other.describe()) }),
            };
            let option = args[1].as_text().ok_or_else(|| ActionError::BadArguments {
                verb: verb.clone(),
                detail: "option label must be quoted".into(),
            })?;
            Ok(Action::Select { tag_id, option })
        }
        "terminate" | "stop" | "done" => {
            if args.is_empty() || args.len() > 2 {
                return Err(ActionError::BadArguments { verb, detail: "expected terminate(status, \"reason\")".into() });
            }
            let status = match args[0].as_text().map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("success") => TerminateStatus::Success,
                Some("failure") | Some("failed") | Some("fail") => TerminateStatus::Failure,
                _ => return Err(ActionError::BadArguments { verb, detail: format!("status must be success or failure, got `{}`", args[0].describe()) }),
            };
            let reason = args.get(1).and_then(Arg::as_text).unwrap_or_default();
            Ok(Action::Terminate { status, reason })
        }
        _ => Err(ActionError::UnknownVerb(verb)),
    }
}

/// Accepts either a grammar string or the tagged JSON object form.
pub fn action_from_json(value: &serde_json::Value) -> Result<Action, ActionError> {
    match value {
        serde_json::Value::String(s) => parse_action(s),
        serde_json::Value::Object(map) => {
            let verb = map.get("type").or_else(|| map.get("action")).and_then(|v| v.as_str()).unwrap_or("");
            if matches!(verb.to_ascii_lowercase().as_str(), "goto" | "navigate") {
                return Err(ActionError::GotoForbidden);
            }
            let action: Action = serde_json::from_value(value.clone()).map_err(|e| {
                if matches!(verb, "click" | "hover" | "type") && !(map.contains_key("x") && map.contains_key("y")) {
                    ActionError::MissingCoordinates { verb: verb.to_string() }
                } else if verb.is_empty() {
                    ActionError::Empty
                } else {
                    ActionError::BadArguments { verb: verb.to_string(), detail: e.to_string() }
                }
            })?;
            if let Some(p) = action.point() {
                if p.x > ACTION_SPACE || p.y > ACTION_SPACE {
                    return Err(ActionError::CoordinateOutOfRange { x: p.x as i64, y: p.y as i64 });
                }
            }
            Ok(action)
        }
        serde_json::Value::Null => Err(ActionError::Empty),
        other => Err(ActionError::UnknownVerb(other.to_string())),
    }
}

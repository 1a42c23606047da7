//! Driver abstraction: a deterministic simulated browser for fixtures and,
//! behind the `live` feature, a remote-debugging client for a real one.

#[cfg(feature = "live")]
pub mod cdp;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ScrollDirection};
use crate::grounding::{denormalize_point, Observation, PixelPoint, RawPage};
use crate::session::{sha256_hex, ActionOutcome};

#[cfg(feature = "live")]
pub use cdp::{CdpConfig, CdpDriver};
pub use sim::{SimDriver, SimFixture};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screenshot {
    pub media_type: String,
    pub width: u32,
    pub height: u32,
    bytes: Vec<u8>,
}

impl Screenshot {
    pub fn new(media_type: impl Into<String>, width: u32, height: u32, bytes: Vec<u8>) -> Self {
        Self { media_type: media_type.into(), width, height, bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.bytes)
    }

    pub fn extension(&self) -> &'static str {
        match self.media_type.as_str() {
            "image/png" => "png",
            "image/jpeg" => "jpg",
            "image/svg+xml" => "svg",
            _ => "bin",
        }
    }
}

/// Element dump and screenshot captured after a single quiescence wait.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub page: RawPage,
    pub screenshot: Screenshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverCapabilities {
    pub can_screenshot: bool,
    pub can_dump_elements: bool,
    pub can_dispatch_input: bool,
    pub can_select_option: bool,
}

impl DriverCapabilities {
    pub const FULL: DriverCapabilities =
        DriverCapabilities { can_screenshot: true, can_dump_elements: true, can_dispatch_input: true, can_select_option: true };
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriverCommand {
    Click(PixelPoint),
    Hover(PixelPoint),
    Type { at: PixelPoint, text: String },
    Scroll(ScrollDirection),
    Select { element_ref: String, option: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverOutcome {
    pub state_changed: bool,
    /// Time until the page settled after the input.
    pub settle_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("timeout")]
    Timeout,
    #[error("page gone")]
    PageGone,
    #[error("{0}")]
    InvalidTarget(String),
    #[error("driver does not support {0}")]
    Unsupported(&'static str),
    #[error("cannot open {0}")]
    Navigation(String),
    #[error("browser protocol: {0}")]
    Protocol(String),
}

pub trait Driver: Send {
    fn capabilities(&self) -> DriverCapabilities;
    fn open(&mut self, url: &str) -> Result<(), DriverError>;
    fn snapshot(&mut self) -> Result<Snapshot, DriverError>;
    fn dispatch(&mut self, command: &DriverCommand) -> Result<DriverOutcome, DriverError>;
}

/// Result of dispatching one agent action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActResult {
    pub outcome: ActionOutcome,
    pub settle_ms: u64,
}

/// Translates a validated action into driver input at pixel coordinates.
/// Terminate is never dispatched. Timeouts and detached pages become failed
/// outcomes; other driver errors are returned to the caller.
pub fn act(driver: &mut dyn Driver, action: &Action, obs: &Observation) -> Result<ActResult, DriverError> {
    let px = |x: u16, y: u16| {
        denormalize_point(crate::grounding::NormPoint { x, y }, obs.viewport)
            .map_err(|e| DriverError::InvalidTarget(e.to_string()))
    };
    let command = match action {
        Action::Terminate { .. } => {
            return Ok(ActResult { outcome: ActionOutcome::applied(false), settle_ms: 0 });
        }
        Action::Click { x, y } => DriverCommand::Click(px(*x, *y)?),
        Action::Hover { x, y } => DriverCommand::Hover(px(*x, *y)?),
        Action::Type { x, y, text } => DriverCommand::Type { at: px(*x, *y)?, text: text.clone() },
        Action::Scroll { direction } => DriverCommand::Scroll(*direction),
        Action::Select { tag_id, option } => {
            if !driver.capabilities().can_select_option {
                return Err(DriverError::Unsupported("select"));
            }
            let e = obs
                .element(*tag_id)
                .ok_or_else(|| DriverError::InvalidTarget(format!("no element tagged {tag_id}")))?;
            DriverCommand::Select { element_ref: e.element_ref.clone(), option: option.clone() }
        }
    };
    match driver.dispatch(&command) {
        Ok(o) => Ok(ActResult { outcome: ActionOutcome::applied(o.state_changed), settle_ms: o.settle_ms }),
        Err(e @ (DriverError::Timeout | DriverError::PageGone | DriverError::InvalidTarget(_))) => {
            Ok(ActResult { outcome: ActionOutcome::failed(e.to_string()), settle_ms: 0 })
        }
        Err(e) => Err(e),
    }
}

//! Deterministic page-graph browser.
//!
//! A fixture (`site.json`) declares pages, their elements with page-space
//! geometry, and what each element does when used. The driver is a pure
//! state machine over `(page, modal, scroll, vars, dismissed)`; its state
//! hash decides whether an action changed anything.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "viewport": {"width": 1280, "height": 800},
//!   "start_page": "home",
//!   "state": {"size": ""},
//!   "pages": [{
//!     "id": "home", "url": "https://shop.test/", "title": "Shop", "height": 2000,
//!     "elements": [
//!       {"id": "go", "role": "button", "label": "Next", "bbox": [100, 100, 200, 50],
//!        "behavior": {"type": "navigate", "page": "done"}},
//!       {"id": "size", "role": "select", "label": "Size: {size}", "bbox": [100, 200, 200, 40],
//!        "behavior": {"type": "select_options", "key": "size", "options": ["S", "M"]}}
//!     ],
//!     "faults": [{"type": "unresponsive", "element": "go"}]
//!   }]
//! }
//! ```
//!
//! Behaviors: `none`, `dead`, `navigate{page}`, `mutate{set}` (a value of
//! `$text` takes the typed text), `open_modal{page}`, `close_modal`,
//! `select_options{key, options}`. Faults: `unresponsive{element}`,
//! `state_desync{key, shown}`, `blocking_modal{page}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Driver, DriverCapabilities, DriverCommand, DriverError, DriverOutcome, Screenshot, Snapshot};
use crate::action::ScrollDirection;
use crate::grounding::{PixelPoint, PixelRect, RawElement, RawPage, Viewport};
use crate::session::sha256_hex;

pub const SIM_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SETTLE_MS: u64 = 300;

const BACKDROP_Z: i32 = 1_000;
const TEXT_ROLES: [&str; 4] = ["input", "textbox", "searchbox", "textarea"];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read fixture {path}: {message}")]
    Io { path: String, message: String },
    #[error("fixture parse error: {0}")]
    Parse(String),
    #[error("invalid fixture: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub key: String,
    pub equals: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    None,
    /// Looks actionable but has no working handler.
    Dead,
    Navigate { page: String },
    Mutate { set: BTreeMap<String, String> },
    OpenModal { page: String },
    CloseModal,
    SelectOptions { key: String, options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fault {
    /// Input aimed at the element never completes.
    Unresponsive { element: String },
    /// Labels on this page show `shown` instead of the real value of `key`.
    StateDesync { key: String, shown: String },
    /// A modal that covers the page until it is closed.
    BlockingModal { page: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimElement {
    pub id: String,
    pub role: String,
    #[serde(default)]
    pub label: String,
    /// `[x, y, w, h]` in page pixels (viewport pixels when `fixed`).
    pub bbox: [f64; 4],
    #[serde(default)]
    pub z: i32,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_type: Option<String>,
    #[serde(default = "default_true")]
    pub interactive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_if: Option<Condition>,
    #[serde(default)]
    pub behavior: Behavior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_ms: Option<u64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPage {
    pub id: String,
    pub url: String,
    #[serde(default)]
    pub title: String,
    /// Document height in pixels; defaults to the viewport height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    pub elements: Vec<SimElement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFixture {
    pub schema_version: u32,
    #[serde(default)]
    pub viewport: Viewport,
    pub start_page: String,
    #[serde(default)]
    pub state: BTreeMap<String, String>,
    #[serde(default = "default_settle")]
    pub default_settle_ms: u64,
    pub pages: Vec<SimPage>,
}

fn default_settle() -> u64 {
    DEFAULT_SETTLE_MS
}

impl SimFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let fixture: SimFixture = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn page(&self, id: &str) -> Option<&SimPage> {
        self.pages.iter().find(|p| p.id == id)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::Invalid(m));
        if self.schema_version != SIM_SCHEMA_VERSION {
            return invalid(format!("schema_version {} (expected {SIM_SCHEMA_VERSION})", self.schema_version));
        }
        Viewport::new(self.viewport.width, self.viewport.height).map_err(|e| SimError::Invalid(e.to_string()))?;
        let mut ids = BTreeSet::new();
        for p in &self.pages {
            if !ids.insert(p.id.as_str()) {
                return invalid(format!("duplicate page id `{}`", p.id));
            }
        }
        if !ids.contains(self.start_page.as_str()) {
            return invalid(format!("start_page `{}` is not a page", self.start_page));
        }
        let target = |page: &str, ctx: &str| -> Result<(), SimError> {
            if ids.contains(page) {
                Ok(())
            } else {
                Err(SimError::Invalid(format!("{ctx} targets unknown page `{page}`")))
            }
        };
        for p in &self.pages {
            let mut element_ids = BTreeSet::new();
            for e in &p.elements {
                let ctx = format!("page `{}` element `{}`", p.id, e.id);
                if !element_ids.insert(e.id.as_str()) {
                    return invalid(format!("{ctx} is declared twice"));
                }
                if e.bbox.iter().any(|v| !v.is_finite()) || e.bbox[2] < 0.0 || e.bbox[3] < 0.0 {
                    return invalid(format!("{ctx} has bad geometry"));
                }
                match &e.behavior {
                    Behavior::Navigate { page } | Behavior::OpenModal { page } => target(page, &ctx)?,
                    Behavior::SelectOptions { options, .. } if options.is_empty() => {
                        return invalid(format!("{ctx} has no options"));
                    }
                    _ => {}
                }
            }
            for f in &p.faults {
                match f {
                    Fault::BlockingModal { page } => target(page, &format!("page `{}` fault", p.id))?,
                    Fault::Unresponsive { element } if !element_ids.contains(element.as_str()) => {
                        return invalid(format!("page `{}` fault names unknown element `{element}`", p.id));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct SimState {
    page: String,
    modal: Option<String>,
    scroll_y: i64,
    vars: BTreeMap<String, String>,
    dismissed: BTreeSet<String>,
}

/// One painted element in viewport space.
struct Placed<'a> {
    element: Option<&'a SimElement>,
    rect: PixelRect,
    z: i32,
}

pub struct SimDriver {
    fixture: SimFixture,
    state: SimState,
}

impl SimDriver {
    pub fn new(fixture: SimFixture) -> Self {
        let mut state = SimState {
            page: fixture.start_page.clone(),
            modal: None,
            scroll_y: 0,
            vars: fixture.state.clone(),
            dismissed: BTreeSet::new(),
        };
        enter_page(&fixture, &mut state);
        Self { fixture, state }
    }

    pub fn fixture(&self) -> &SimFixture {
        &self.fixture
    }

    pub fn viewport(&self) -> Viewport {
        self.fixture.viewport
    }

    pub fn current_page(&self) -> &str {
        &self.state.page
    }

    pub fn var(&self, key: &str) -> Option<&str> {
        self.state.vars.get(key).map(String::as_str)
    }

    /// Digest of the canonical simulator state.
    pub fn state_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.state).expect("sim state serializes"))
    }

    fn page(&self) -> &SimPage {
        self.fixture.page(&self.state.page).expect("current page exists")
    }

    fn shown_value(&self, key: &str) -> String {
        for f in &self.page().faults {
            if let Fault::StateDesync { key: k, shown } = f {
                if k == key {
                    return shown.clone();
                }
            }
        }
        self.state.vars.get(key).cloned().unwrap_or_default()
    }

    fn render_label(&self, template: &str) -> String {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            let Some(len) = rest[start..].find('}') else { break };
            out.push_str(&rest[..start]);
            out.push_str(&self.shown_value(&rest[start + 1..start + len]));
            rest = &rest[start + len + 1..];
        }
        out.push_str(rest);
        out
    }

    fn is_visible(&self, e: &SimElement) -> bool {
        match &e.visible_if {
            Some(c) => self.state.vars.get(&c.key).map(String::as_str).unwrap_or("") == c.equals,
            None => true,
        }
    }

    /// Elements painted in the viewport, bottom layer first.
    fn placed(&self) -> Vec<Placed<'_>> {
        let vp = self.fixture.viewport;
        let mut out = Vec::new();
        for e in self.page().elements.iter().filter(|e| self.is_visible(e)) {
            let dy = if e.fixed { 0.0 } else { self.state.scroll_y as f64 };
            out.push(Placed { element: Some(e), rect: PixelRect::new(e.bbox[0], e.bbox[1] - dy, e.bbox[2], e.bbox[3]), z: e.z });
        }
        if let Some(modal) = self.state.modal.as_deref().and_then(|m| self.fixture.page(m)) {
            out.push(Placed { element: None, rect: PixelRect::new(0.0, 0.0, vp.width as f64, vp.height as f64), z: BACKDROP_Z });
            for e in modal.elements.iter().filter(|e| self.is_visible(e)) {
                out.push(Placed {
                    element: Some(e),
                    rect: PixelRect::new(e.bbox[0], e.bbox[1], e.bbox[2], e.bbox[3]),
                    z: BACKDROP_Z + 1 + e.z,
                });
            }
        }
        out
    }

    /// Topmost painted element under `p`; `None` for empty space or the
    /// modal backdrop.
    fn hit(&self, p: PixelPoint) -> Option<&SimElement> {
        let placed = self.placed();
        let top = placed
            .iter()
            .enumerate()
            .filter(|(_, pl)| pl.rect.contains(p))
            .max_by_key(|(i, pl)| (pl.z, *i))
            .map(|(_, pl)| pl.element);
        top.flatten()
    }

    fn find_visible(&self, element_ref: &str) -> Option<&SimElement> {
        self.placed().into_iter().filter_map(|pl| pl.element).find(|e| e.id == element_ref)
    }

    fn is_unresponsive(&self, id: &str) -> bool {
        self.page().faults.iter().any(|f| matches!(f, Fault::Unresponsive { element } if element == id))
    }

    fn settle(&self, e: Option<&SimElement>) -> u64 {
        e.and_then(|e| e.settle_ms).unwrap_or(self.fixture.default_settle_ms)
    }

    fn apply(&mut self, behavior: &Behavior, text: &str) {
        match behavior {
            Behavior::None | Behavior::Dead | Behavior::SelectOptions { .. } => {}
            Behavior::Navigate { page } => {
                self.state.page = page.clone();
                self.state.scroll_y = 0;
                self.state.modal = None;
                enter_page(&self.fixture, &mut self.state);
            }
            Behavior::Mutate { set } => {
                for (k, v) in set {
                    self.state.vars.insert(k.clone(), v.replace("$text", text));
                }
            }
            Behavior::OpenModal { page } => self.state.modal = Some(page.clone()),
            Behavior::CloseModal => {
                if let Some(m) = self.state.modal.take() {
                    self.state.dismissed.insert(m);
                }
            }
        }
    }

    fn screenshot(&self, page: &RawPage) -> Screenshot {
        let vp = self.fixture.viewport;
        let mut svg = String::new();
        let _ = write!(
            svg,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}"><rect width="{w}" height="{h}" fill="#ffffff"/><text x="8" y="16" font-size="12">{}</text>"##,
            xml_escape(&page.title),
            w = vp.width,
            h = vp.height
        );
        for e in &page.elements {
            let fill = if e.role == "backdrop" { "rgba(0,0,0,0.4)" } else { "none" };
            let r = e.bbox_px;
            let _ = write!(
                svg,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="#333333"/><text x="{}" y="{}" font-size="12">{}</text>"##,
                r.x,
                r.y,
                r.w,
                r.h,
                r.x + 4.0,
                r.y + 14.0,
                xml_escape(&e.label)
            );
        }
        svg.push_str("</svg>");
        Screenshot::new("image/svg+xml", vp.width, vp.height, svg.into_bytes())
    }
}

fn enter_page(fixture: &SimFixture, state: &mut SimState) {
    let Some(page) = fixture.page(&state.page) else { return };
    for f in &page.faults {
        if let Fault::BlockingModal { page: m } = f {
            if !state.dismissed.contains(m) && state.modal.is_none() {
                state.modal = Some(m.clone());
            }
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn same_url(a: &str, b: &str) -> bool {
    a.trim_end_matches('/').eq_ignore_ascii_case(b.trim_end_matches('/'))
}

impl Driver for SimDriver {
    fn capabilities(&self) -> DriverCapabilities {
        DriverCapabilities::FULL
    }

    fn open(&mut self, url: &str) -> Result<(), DriverError> {
        let page = self
            .fixture
            .pages
            .iter()
            .find(|p| same_url(&p.url, url))
            .ok_or_else(|| DriverError::Navigation(format!("{url} (not in the fixture page graph)")))?;
        self.state.page = page.id.clone();
        self.state.scroll_y = 0;
        self.state.modal = None;
        enter_page(&self.fixture, &mut self.state);
        Ok(())
    }

    fn snapshot(&mut self) -> Result<Snapshot, DriverError> {
        let placed = self.placed();
        let mut elements = Vec::with_capacity(placed.len());
        for pl in &placed {
            elements.push(match pl.element {
                Some(e) => RawElement {
                    element_ref: e.id.clone(),
                    role: e.role.clone(),
                    label: self.render_label(&e.label),
                    bbox_px: pl.rect,
                    interactive: e.interactive,
                    visible: true,
                    z_index: pl.z,
                    input_type: e.input_type.clone(),
                    options: match &e.behavior {
                        Behavior::SelectOptions { options, .. } => options.clone(),
                        _ => Vec::new(),
                    },
                },
                None => RawElement {
                    element_ref: "backdrop".into(),
                    role: "backdrop".into(),
                    label: String::new(),
                    bbox_px: pl.rect,
                    interactive: false,
                    visible: true,
                    z_index: pl.z,
                    input_type: None,
                    options: Vec::new(),
                },
            });
        }
        let page = self.page();
        let raw = RawPage {
            url: page.url.clone(),
            title: page.title.clone(),
            viewport: self.fixture.viewport,
            scroll_offset: (0, self.state.scroll_y),
            elements,
        };
        let screenshot = self.screenshot(&raw);
        Ok(Snapshot { page: raw, screenshot })
    }

    fn dispatch(&mut self, command: &DriverCommand) -> Result<DriverOutcome, DriverError> {
        let before = self.state_hash();
        let settle_ms = match command {
            DriverCommand::Click(p) | DriverCommand::Hover(p) | DriverCommand::Type { at: p, .. } => {
                let target = self.hit(*p).cloned();
                if let Some(e) = &target {
                    if self.is_unresponsive(&e.id) {
                        return Err(DriverError::Timeout);
                    }
                }
                match (command, &target) {
                    (DriverCommand::Click(_), Some(e)) if !TEXT_ROLES.contains(&e.role.as_str()) => {
                        self.apply(&e.behavior, "")
                    }
                    (DriverCommand::Type { text, .. }, Some(e)) if matches!(e.behavior, Behavior::Mutate { .. }) => {
                        self.apply(&e.behavior, text)
                    }
                    _ => {}
                }
                self.settle(target.as_ref())
            }
            DriverCommand::Scroll(direction) => {
                let vh = self.fixture.viewport.height as i64;
                let doc = self.page().height.map(i64::from).unwrap_or(vh);
                let max = (doc - vh).max(0);
                let step = vh * 3 / 4;
                self.state.scroll_y = match direction {
                    ScrollDirection::Down => (self.state.scroll_y + step).min(max),
                    ScrollDirection::Up => (self.state.scroll_y - step).max(0),
                    ScrollDirection::ToBottom => max,
                };
                self.fixture.default_settle_ms
            }
            DriverCommand::Select { element_ref, option } => {
                let e = self
                    .find_visible(element_ref)
                    .cloned()
                    .ok_or_else(|| DriverError::InvalidTarget(format!("element {element_ref} is not on screen")))?;
                if self.is_unresponsive(&e.id) {
                    return Err(DriverError::Timeout);
                }
                let Behavior::SelectOptions { key, options } = &e.behavior else {
                    return Err(DriverError::InvalidTarget(format!("element {element_ref} has no options")));
                };
                if !options.iter().any(|o| o == option) {
                    return Err(DriverError::InvalidTarget(format!("option \"{option}\" not available")));
                }
                self.state.vars.insert(key.clone(), option.clone());
                self.settle(Some(&e))
            }
        };
        Ok(DriverOutcome { state_changed: self.state_hash() != before, settle_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::browser::act;
    use crate::grounding::{ground_observation, Observation};
    use crate::session::OutcomeKind;

    const SITE: &str = r#"{
      "schema_version": 1,
      "viewport": {"width": 1000, "height": 1000},
      "start_page": "home",
      "state": {"size": "2"},
      "pages": [
        {"id": "home", "url": "https://t.test/", "title": "Home", "height": 3000,
         "elements": [
           {"id": "next", "role": "button", "label": "Next", "bbox": [100, 100, 200, 50],
            "behavior": {"type": "navigate", "page": "second"}},
           {"id": "cell", "role": "button", "label": "12", "bbox": [400, 100, 50, 50], "behavior": {"type": "dead"}},
           {"id": "size", "role": "select", "label": "Size {size}", "bbox": [100, 300, 200, 40],
            "behavior": {"type": "select_options", "key": "size", "options": ["2", "3", "4", "5"]}},
           {"id": "slow", "role": "button", "label": "Slow", "bbox": [600, 100, 80, 40]},
           {"id": "q", "role": "input", "label": "Search", "bbox": [100, 400, 300, 40],
            "behavior": {"type": "mutate", "set": {"query": "$text"}}},
           {"id": "footer", "role": "link", "label": "Help", "bbox": [100, 2900, 80, 20]}
         ],
         "faults": [{"type": "unresponsive", "element": "slow"}]},
        {"id": "second", "url": "https://t.test/2", "title": "Second",
         "elements": [{"id": "ok", "role": "button", "label": "Shown {size}", "bbox": [100, 100, 100, 50]}],
         "faults": [{"type": "blocking_modal", "page": "promo"}, {"type": "state_desync", "key": "size", "shown": "1"}]},
        {"id": "promo", "url": "https://t.test/promo", "title": "Promo",
         "elements": [{"id": "close", "role": "button", "label": "Close", "bbox": [700, 50, 80, 40],
                       "behavior": {"type": "close_modal"}}]}
      ]
    }"#;

    fn driver() -> SimDriver {
        SimDriver::new(SimFixture::from_json(SITE).unwrap())
    }

    fn observe(d: &mut SimDriver) -> Observation {
        let snap = d.snapshot().unwrap();
        ground_observation(&snap.page, snap.page.viewport).unwrap()
    }

    fn tag(obs: &Observation, label: &str) -> u32 {
        obs.elements.iter().find(|e| e.label == label).unwrap().tag_id
    }

    fn click_on(obs: &Observation, label: &str) -> Action {
        let c = obs.element(tag(obs, label)).unwrap().bbox_norm.center();
        Action::Click { x: c.x, y: c.y }
    }

    #[test]
    fn navigate_is_applied_and_changes_state() {
        let mut d = driver();
        let obs = observe(&mut d);
        let r = act(&mut d, &click_on(&obs, "Next"), &obs).unwrap();
        assert_eq!(r.outcome.kind, OutcomeKind::Applied);
        assert!(r.outcome.state_changed);
        assert_eq!(r.settle_ms, DEFAULT_SETTLE_MS);
        assert_eq!(d.current_page(), "second");
    }

    #[test]
    fn dead_element_is_visible_but_inert() {
        let mut d = driver();
        let obs = observe(&mut d);
        assert!(obs.elements.iter().any(|e| e.label == "12" && !e.occluded));
        let before = d.state_hash();
        let r = act(&mut d, &click_on(&obs, "12"), &obs).unwrap();
        assert_eq!(r.outcome.kind, OutcomeKind::Applied);
        assert!(!r.outcome.state_changed);
        assert_eq!(before, d.state_hash());
    }

    #[test]
    fn select_sets_group_size() {
        let mut d = driver();
        let obs = observe(&mut d);
        let t = tag(&obs, "Size 2");
        let r = act(&mut d, &Action::Select { tag_id: t, option: "4".into() }, &obs).unwrap();
        assert!(r.outcome.state_changed);
        assert_eq!(d.var("size"), Some("4"));
        assert!(observe(&mut d).elements.iter().any(|e| e.label == "Size 4"));
        let bad = act(&mut d, &Action::Select { tag_id: t, option: "9".into() }, &obs).unwrap();
        assert_eq!(bad.outcome.kind, OutcomeKind::Failed);
    }

    #[test]
    fn unresponsive_element_times_out() {
        let mut d = driver();
        let obs = observe(&mut d);
        let r = act(&mut d, &click_on(&obs, "Slow"), &obs).unwrap();
        assert_eq!(r.outcome, crate::session::ActionOutcome::failed("timeout"));
    }

    #[test]
    fn typing_stores_text() {
        let mut d = driver();
        let obs = observe(&mut d);
        let c = obs.element(tag(&obs, "Search")).unwrap().bbox_norm.center();
        // clicking a text field only focuses it
        assert!(!act(&mut d, &Action::Click { x: c.x, y: c.y }, &obs).unwrap().outcome.state_changed);
        let r = act(&mut d, &Action::Type { x: c.x, y: c.y, text: "rules".into() }, &obs).unwrap();
        assert!(r.outcome.state_changed);
        assert_eq!(d.var("query"), Some("rules"));
    }

    #[test]
    fn scroll_reveals_footer_and_stops_at_bottom() {
        let mut d = driver();
        assert!(!observe(&mut d).elements.iter().any(|e| e.label == "Help"));
        let obs = observe(&mut d);
        let down = Action::Scroll { direction: ScrollDirection::ToBottom };
        assert!(act(&mut d, &down, &obs).unwrap().outcome.state_changed);
        let obs = observe(&mut d);
        assert_eq!(obs.scroll_offset, (0, 2000));
        assert!(obs.elements.iter().any(|e| e.label == "Help"));
        assert!(!act(&mut d, &down, &obs).unwrap().outcome.state_changed);
    }

    #[test]
    fn blocking_modal_occludes_until_closed() {
        let mut d = driver();
        let obs = observe(&mut d);
        act(&mut d, &click_on(&obs, "Next"), &obs).unwrap();
        let obs = observe(&mut d);
        let ok = obs.elements.iter().find(|e| e.label.starts_with("Shown")).unwrap();
        assert!(ok.occluded);
        // the page shows a stale value for the size
        assert_eq!(ok.label, "Shown 1");
        // clicks under the backdrop do nothing
        let before = d.state_hash();
        act(&mut d, &click_on(&obs, "Shown 1"), &obs).unwrap();
        assert_eq!(before, d.state_hash());
        act(&mut d, &click_on(&obs, "Close"), &obs).unwrap();
        let obs = observe(&mut d);
        assert!(obs.elements.iter().all(|e| !e.occluded));
        assert!(obs.elements.iter().all(|e| e.label != "Close"));
    }

    #[test]
    fn trajectories_are_deterministic() {
        let run = || {
            let mut d = driver();
            let mut hashes = vec![];
            for _ in 0..3 {
                let obs = observe(&mut d);
                let snap = d.snapshot().unwrap();
                hashes.push((d.state_hash(), snap.screenshot.digest()));
                let a = click_on(&obs, obs.elements[0].label.as_str());
                act(&mut d, &a, &obs).unwrap();
            }
            hashes
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn open_matches_urls_and_rejects_unknown() {
        let mut d = driver();
        d.open("https://t.test/2/").unwrap();
        assert_eq!(d.current_page(), "second");
        assert!(matches!(d.open("https://elsewhere.test/"), Err(DriverError::Navigation(_))));
    }

    #[test]
    fn validation_catches_dangling_targets() {
        let bad = SITE.replace(r#""page": "second""#, r#""page": "nowhere""#);
        let err = SimFixture::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("nowhere"), "{err}");
        let bad = SITE.replace(r#""start_page": "home""#, r#""start_page": "x""#);
        assert!(SimFixture::from_json(&bad).is_err());
    }
}

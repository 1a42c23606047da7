//! Real-browser driver over the Chrome DevTools remote-debugging protocol.
//!
//! Start a browser with `--remote-debugging-port=9222`, then point the
//! driver at `http://127.0.0.1:9222`. The driver attaches to the first page
//! target, forces the configured viewport, and waits for the page to go
//! quiet (no DOM mutations or new resources for 300 ms, capped at 10 s)
//! after every navigation or input.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{Driver, DriverCapabilities, DriverCommand, DriverError, DriverOutcome, Screenshot, Snapshot};
use crate::action::ScrollDirection;
use crate::grounding::{PixelRect, RawElement, RawPage, Viewport};
use crate::session::sha256_hex;

#[derive(Debug, Clone, PartialEq)]
pub struct CdpConfig {
    /// HTTP endpoint of the debugging port, e.g. `http://127.0.0.1:9222`.
    pub endpoint: String,
    pub viewport: Viewport,
    pub command_timeout: Duration,
    pub quiet_window: Duration,
    pub settle_cap: Duration,
}

impl Default for CdpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:9222".into(),
            viewport: Viewport::default(),
            command_timeout: Duration::from_secs(30),
            quiet_window: Duration::from_millis(300),
            settle_cap: Duration::from_secs(10),
        }
    }
}

/// Collects candidate elements, tags them with `data-uxprobe-ref` so that
/// `select` can find them again, and reports viewport-relative boxes.
const DUMP_JS: &str = r#"(() => {
  const sel = 'a,button,input,select,textarea,summary,[role],[onclick],[tabindex],label,h1,h2,h3,[aria-modal]';
  const out = [];
  let n = 0;
  for (const el of document.querySelectorAll(sel)) {
    const r = el.getBoundingClientRect();
    const cs = getComputedStyle(el);
    if (!el.dataset.uxprobeRef) el.dataset.uxprobeRef = 'e' + (n++) + '-' + Math.random().toString(36).slice(2, 8);
    const tag = el.tagName.toLowerCase();
    const role = el.getAttribute('role') || (tag === 'a' ? 'link' : tag);
    const label = (el.getAttribute('aria-label') || el.innerText || el.value || el.placeholder || el.title || '').trim().slice(0, 120);
    const interactive = ['a','button','input','select','textarea','summary'].includes(tag) ||
      ['button','link','menuitem','tab','checkbox','radio','switch','textbox','combobox','listbox','searchbox'].includes(role) ||
      el.hasAttribute('onclick');
    const z = parseInt(cs.zIndex, 10);
    out.push({
      ref: el.dataset.uxprobeRef, role, label,
      x: r.x, y: r.y, w: r.width, h: r.height,
      interactive: interactive && !el.disabled,
      visible: cs.visibility !== 'hidden' && cs.display !== 'none' && parseFloat(cs.opacity || '1') > 0,
      z: isNaN(z) ? 0 : z,
      input_type: tag === 'input' ? (el.type || 'text') : null,
      options: tag === 'select' ? Array.from(el.options).map(o => o.label) : []
    });
  }
  return { url: location.href, title: document.title, scroll_x: scrollX, scroll_y: scrollY, elements: out };
})()"#;

const ACTIVITY_JS: &str = r#"(() => {
  if (!window.__uxprobeMut) {
    window.__uxprobeMut = { n: 0 };
    new MutationObserver(() => window.__uxprobeMut.n++)
      .observe(document, { subtree: true, childList: true, attributes: true, characterData: true });
  }
  return document.readyState + ':' + window.__uxprobeMut.n + ':' + performance.getEntriesByType('resource').length;
})()"#;

const STATE_JS: &str = "location.href + '\\u0000' + document.documentElement.outerHTML";

pub(crate) fn command_message(id: u64, method: &str, params: Value) -> String {
    json!({ "id": id, "method": method, "params": params }).to_string()
}

/// WebSocket URL of the first page target in a `/json/list` reply.
pub(crate) fn page_target(list: &Value) -> Option<String> {
    list.as_array()?
        .iter()
        .find(|t| t["type"] == "page")
        .and_then(|t| t["webSocketDebuggerUrl"].as_str())
        .map(str::to_string)
}

pub(crate) fn parse_dump(dump: &Value, viewport: Viewport) -> Result<RawPage, DriverError> {
    let bad = |m: &str| DriverError::Protocol(format!("element dump: {m}"));
    let elements = dump["elements"].as_array().ok_or_else(|| bad("missing elements"))?;
    let mut out = Vec::with_capacity(elements.len());
    for e in elements {
        let num = |k: &str| e[k].as_f64().ok_or_else(|| bad(&format!("missing `{k}`")));
        out.push(RawElement {
            element_ref: e["ref"].as_str().ok_or_else(|| bad("missing `ref`"))?.to_string(),
            role: e["role"].as_str().unwrap_or("other").to_string(),
            label: e["label"].as_str().unwrap_or_default().to_string(),
            bbox_px: PixelRect::new(num("x")?, num("y")?, num("w")?, num("h")?),
            interactive: e["interactive"].as_bool().unwrap_or(false),
            visible: e["visible"].as_bool().unwrap_or(true),
            z_index: e["z"].as_i64().unwrap_or(0) as i32,
            input_type: e["input_type"].as_str().map(str::to_string),
            options: e["options"]
                .as_array()
                .map(|a| a.iter().filter_map(|o| o.as_str().map(str::to_string)).collect())
                .unwrap_or_default(),
        });
    }
    Ok(RawPage {
        url: dump["url"].as_str().unwrap_or_default().to_string(),
        title: dump["title"].as_str().unwrap_or_default().to_string(),
        viewport,
        scroll_offset: (dump["scroll_x"].as_f64().unwrap_or(0.0) as i64, dump["scroll_y"].as_f64().unwrap_or(0.0) as i64),
        elements: out,
    })
}

fn select_js(element_ref: &str, option: &str) -> String {
    let r = serde_json::to_string(element_ref).expect("string serializes");
    let o = serde_json::to_string(option).expect("string serializes");
    format!(
        r#"(() => {{
  const el = document.querySelector('[data-uxprobe-ref=' + JSON.stringify({r}) + ']');
  if (!el || el.tagName.toLowerCase() !== 'select') return 'missing';
  const opt = Array.from(el.options).find(o => o.label === {o} || o.value === {o});
  if (!opt) return 'no-option';
  el.value = opt.value;
  el.dispatchEvent(new Event('input', {{ bubbles: true }}));
  el.dispatchEvent(new Event('change', {{ bubbles: true }}));
  return 'ok';
}})()"#
    )
}

fn scroll_js(direction: ScrollDirection) -> &'static str {
    match direction {
        ScrollDirection::Down => "window.scrollBy(0, Math.round(innerHeight * 0.75))",
        ScrollDirection::Up => "window.scrollBy(0, -Math.round(innerHeight * 0.75))",
        ScrollDirection::ToBottom => "window.scrollTo(0, document.documentElement.scrollHeight)",
    }
}

pub struct CdpDriver {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    config: CdpConfig,
    next_id: u64,
}

fn ws_error(e: tungstenite::Error) -> DriverError {
    match e {
        tungstenite::Error::Io(io)
            if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
        {
            DriverError::Timeout
        }
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => DriverError::PageGone,
        tungstenite::Error::Io(io) if io.kind() == std::io::ErrorKind::ConnectionReset => DriverError::PageGone,
        other => DriverError::Protocol(other.to_string()),
    }
}

impl CdpDriver {
    pub fn connect(config: CdpConfig) -> Result<Self, DriverError> {
        let list_url = format!("{}/json/list", config.endpoint.trim_end_matches('/'));
        let list: Value = reqwest::blocking::Client::builder()
            .timeout(config.command_timeout)
            .build()
            .and_then(|c| c.get(&list_url).send())
            .and_then(|r| r.json())
            .map_err(|e| DriverError::Protocol(format!("cannot list targets at {list_url}: {e}")))?;
        let ws_url = page_target(&list).ok_or_else(|| DriverError::Protocol("no page target to attach to".into()))?;
        let (socket, _) = tungstenite::connect(ws_url.as_str()).map_err(ws_error)?;
        if let MaybeTlsStream::Plain(s) = socket.get_ref() {
            s.set_read_timeout(Some(config.command_timeout)).map_err(|e| DriverError::Protocol(e.to_string()))?;
        }
        let mut driver = Self { socket, config, next_id: 1 };
        let vp = driver.config.viewport;
        driver.call(
            "Emulation.setDeviceMetricsOverride",
            json!({ "width": vp.width, "height": vp.height, "deviceScaleFactor": 1, "mobile": false }),
        )?;
        driver.call("Page.enable", json!({}))?;
        Ok(driver)
    }

    fn call(&mut self, method: &str, params: Value) -> Result<Value, DriverError> {
        let id = self.next_id;
        self.next_id += 1;
        self.socket.send(Message::text(command_message(id, method, params))).map_err(ws_error)?;
        let deadline = Instant::now() + self.config.command_timeout;
        loop {
            if Instant::now() > deadline {
                return Err(DriverError::Timeout);
            }
            let msg = self.socket.read().map_err(ws_error)?;
            let Message::Text(text) = msg else { continue };
            let Ok(v) = serde_json::from_str::<Value>(text.as_str()) else { continue };
            if v["id"].as_u64() != Some(id) {
                continue;
            }
            if let Some(err) = v.get("error") {
                let message = err["message"].as_str().unwrap_or("unknown error");
                if message.contains("Target closed") || message.contains("No target") {
                    return Err(DriverError::PageGone);
                }
                return Err(DriverError::Protocol(format!("{method}: {message}")));
            }
            return Ok(v["result"].clone());
        }
    }

    fn evaluate(&mut self, expression: &str) -> Result<Value, DriverError> {
        let r = self.call("Runtime.evaluate", json!({ "expression": expression, "returnByValue": true, "awaitPromise": true }))?;
        if let Some(ex) = r.get("exceptionDetails") {
            return Err(DriverError::Protocol(format!("script error: {}", ex["text"].as_str().unwrap_or("?"))));
        }
        Ok(r["result"]["value"].clone())
    }

    /// Waits until the activity signature has been stable for the quiet
    /// window; returns the elapsed time in milliseconds.
    fn wait_quiet(&mut self) -> Result<u64, DriverError> {
        let started = Instant::now();
        let mut last = String::new();
        let mut stable_since = Instant::now();
        loop {
            let sig = self.evaluate(ACTIVITY_JS)?.as_str().unwrap_or_default().to_string();
            if sig != last || !sig.starts_with("complete") {
                last = sig;
                stable_since = Instant::now();
            } else if stable_since.elapsed() >= self.config.quiet_window {
                break;
            }
            if started.elapsed() >= self.config.settle_cap {
                log::warn!("cdp: page did not settle within {:?}", self.config.settle_cap);
                break;
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        Ok(started.elapsed().as_millis() as u64)
    }

    fn state_hash(&mut self) -> Result<String, DriverError> {
        let s = self.evaluate(STATE_JS)?;
        Ok(sha256_hex(s.as_str().unwrap_or_default().as_bytes()))
    }

    fn mouse(&mut self, kind: &str, x: f64, y: f64) -> Result<(), DriverError> {
        let mut params = json!({ "type": kind, "x": x, "y": y });
        if kind != "mouseMoved" {
            params["button"] = json!("left");
            params["clickCount"] = json!(1);
        }
        self.call("Input.dispatchMouseEvent", params).map(|_| ())
    }

    fn click(&mut self, x: f64, y: f64) -> Result<(), DriverError> {
        self.mouse("mouseMoved", x, y)?;
        self.mouse("mousePressed", x, y)?;
        self.mouse("mouseReleased", x, y)
    }
}

impl Driver for CdpDriver {
    fn capabilities(&self) -> DriverCapabilities {
        DriverCapabilities::FULL
    }

    fn open(&mut self, url: &str) -> Result<(), DriverError> {
        let r = self.call("Page.navigate", json!({ "url": url }))?;
        if let Some(err) = r["errorText"].as_str() {
            return Err(DriverError::Navigation(format!("{url}: {err}")));
        }
        self.wait_quiet()?;
        Ok(())
    }

    fn snapshot(&mut self) -> Result<Snapshot, DriverError> {
        let dump = self.evaluate(DUMP_JS)?;
        let page = parse_dump(&dump, self.config.viewport)?;
        let shot = self.call("Page.captureScreenshot", json!({ "format": "png" }))?;
        let data = shot["data"].as_str().ok_or_else(|| DriverError::Protocol("screenshot has no data".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| DriverError::Protocol(format!("screenshot: {e}")))?;
        let vp = self.config.viewport;
        Ok(Snapshot { page, screenshot: Screenshot::new("image/png", vp.width, vp.height, bytes) })
    }

    fn dispatch(&mut self, command: &DriverCommand) -> Result<DriverOutcome, DriverError> {
        let before = self.state_hash()?;
        match command {
            DriverCommand::Click(p) => self.click(p.x, p.y)?,
            DriverCommand::Hover(p) => self.mouse("mouseMoved", p.x, p.y)?,
            DriverCommand::Type { at, text } => {
                self.click(at.x, at.y)?;
                self.call("Input.insertText", json!({ "text": text }))?;
            }
            DriverCommand::Scroll(d) => {
                self.evaluate(scroll_js(*d))?;
            }
            DriverCommand::Select { element_ref, option } => match self.evaluate(&select_js(element_ref, option))?.as_str() {
                Some("ok") => {}
                Some("no-option") => return Err(DriverError::InvalidTarget(format!("option \"{option}\" not available"))),
                _ => return Err(DriverError::InvalidTarget(format!("element {element_ref} is not a dropdown on this page"))),
            },
        }
        let settle_ms = self.wait_quiet()?;
        let after = self.state_hash()?;
        Ok(DriverOutcome { state_changed: before != after, settle_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_commands() {
        let m: Value = serde_json::from_str(&command_message(7, "Page.navigate", json!({"url": "https://a.test"}))).unwrap();
        assert_eq!(m, json!({"id": 7, "method": "Page.navigate", "params": {"url": "https://a.test"}}));
    }

    #[test]
    fn picks_the_page_target() {
        let list = json!([
            {"type": "service_worker", "webSocketDebuggerUrl": "ws://x/sw"},
            {"type": "page", "webSocketDebuggerUrl": "ws://127.0.0.1:9222/devtools/page/AB"}
        ]);
        assert_eq!(page_target(&list).unwrap(), "ws://127.0.0.1:9222/devtools/page/AB");
        assert!(page_target(&json!([])).is_none());
    }

    #[test]
    fn parses_element_dump() {
        let dump = json!({
            "url": "https://a.test/", "title": "A", "scroll_x": 0, "scroll_y": 120.5,
            "elements": [
                {"ref": "e0", "role": "select", "label": "Group size", "x": 10, "y": 20, "w": 100, "h": 30,
                 "interactive": true, "visible": true, "z": 0, "input_type": null, "options": ["2", "3"]},
                {"ref": "e1", "role": "input", "label": "", "x": 0, "y": 0, "w": 5, "h": 5,
                 "interactive": true, "input_type": "password"}
            ]
        });
        let page = parse_dump(&dump, Viewport::new(1280, 800).unwrap()).unwrap();
        assert_eq!(page.scroll_offset, (0, 120));
        assert_eq!(page.elements[0].options, vec!["2", "3"]);
        assert_eq!(page.elements[1].input_type.as_deref(), Some("password"));
        assert!(parse_dump(&json!({"elements": [{"ref": "e"}]}), Viewport::default()).is_err());
    }

    #[test]
    fn select_script_quotes_arguments() {
        let js = select_js("e1", "Say \"hi\"");
        assert!(js.contains(r#"JSON.stringify("e1")"#));
        assert!(js.contains(r#""Say \"hi\"""#));
    }
}

//! Grounded observations: interactive elements tagged 1..N with boxes in the
//! normalized 1000x1000 action space.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::Screenshot;

/// Side length of the normalized action space.
pub const ACTION_SPACE: u16 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundingError {
    #[error("viewport must have positive dimensions, got {width}x{height}")]
    InvalidViewport { width: u32, height: u32 },
    #[error("element `{0}` has non-finite geometry")]
    BadGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn new(width: u32, height: u32) -> Result<Self, GroundingError> {
        let vp = Self { width, height };
        vp.check()?;
        Ok(vp)
    }

    fn check(&self) -> Result<(), GroundingError> {
        if self.width == 0 || self.height == 0 {
            return Err(GroundingError::InvalidViewport { width: self.width, height: self.height });
        }
        Ok(())
    }
}

impl Default for Viewport {
    fn default() -> Self {
        Self { width: 1280, height: 800 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormPoint {
    pub x: u16,
    pub y: u16,
}

/// Pixel rectangle: origin at top-left, `w`/`h` extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl PixelRect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn covers(&self, other: &PixelRect) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && self.right() >= other.right()
            && self.bottom() >= other.bottom()
    }

    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        (r > x && b > y).then(|| PixelRect::new(x, y, r - x, b - y))
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }
}

/// Rectangle in the normalized action space; every field is in [0, 1000].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormRect {
    pub x: u16,
    pub y: u16,
    pub w: u16,
    pub h: u16,
}

impl NormRect {
    pub fn center(&self) -> NormPoint {
        NormPoint { x: self.x + self.w / 2, y: self.y + self.h / 2 }
    }

    pub fn contains(&self, p: NormPoint) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    fn area(&self) -> u32 {
        self.w as u32 * self.h as u32
    }
}

fn norm_axis(px: f64, extent: u32) -> u16 {
    let v = (px * ACTION_SPACE as f64 / extent as f64).round();
    v.clamp(0.0, ACTION_SPACE as f64) as u16
}

/// Maps a viewport pixel into the 1000x1000 space (nearest integer, clamped).
pub fn normalize_point(p: PixelPoint, viewport: Viewport) -> Result<NormPoint, GroundingError> {
    viewport.check()?;
    Ok(NormPoint { x: norm_axis(p.x, viewport.width), y: norm_axis(p.y, viewport.height) })
}

/// Inverse of [`normalize_point`]; the result is not rounded.
pub fn denormalize_point(p: NormPoint, viewport: Viewport) -> Result<PixelPoint, GroundingError> {
    viewport.check()?;
    Ok(PixelPoint {
        x: p.x as f64 * viewport.width as f64 / ACTION_SPACE as f64,
        y: p.y as f64 * viewport.height as f64 / ACTION_SPACE as f64,
    })
}

pub fn normalize_rect(r: &PixelRect, viewport: Viewport) -> Result<NormRect, GroundingError> {
    let tl = normalize_point(PixelPoint { x: r.x, y: r.y }, viewport)?;
    let br = normalize_point(PixelPoint { x: r.right(), y: r.bottom() }, viewport)?;
    Ok(NormRect { x: tl.x, y: tl.y, w: br.x - tl.x, h: br.y - tl.y })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementRole {
    Button,
    Link,
    Input,
    Select,
    Checkbox,
    Other,
}

impl ElementRole {
    /// Maps a driver role or tag name onto the grounded role vocabulary.
    pub fn from_driver(role: &str) -> Self {
        match role.to_ascii_lowercase().as_str() {
            "button" | "submit" | "menuitem" | "tab" => ElementRole::Button,
            "link" | "a" => ElementRole::Link,
            "input" | "textbox" | "textarea" | "searchbox" | "combobox" => ElementRole::Input,
            "select" | "listbox" => ElementRole::Select,
            "checkbox" | "radio" | "switch" => ElementRole::Checkbox,
            _ => ElementRole::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementRole::Button => "button",
            ElementRole::Link => "link",
            ElementRole::Input => "input",
            ElementRole::Select => "select",
            ElementRole::Checkbox => "checkbox",
            ElementRole::Other => "other",
        }
    }
}

/// One element as reported by a driver. Geometry is in viewport pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawElement {
    /// Driver-side handle used to address the element for `select`.
    pub element_ref: String,
    pub role: String,
    #[serde(default)]
    pub label: String,
    pub bbox_px: PixelRect,
    #[serde(default)]
    pub interactive: bool,
    #[serde(default = "default_true")]
    pub visible: bool,
    #[serde(default)]
    pub z_index: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

fn default_true() -> bool {
    true
}

/// Element dump plus page metadata captured by a driver snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPage {
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub viewport: Viewport,
    #[serde(default)]
    pub scroll_offset: (i64, i64),
    pub elements: Vec<RawElement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedElement {
    pub tag_id: u32,
    pub role: ElementRole,
    pub label: String,
    pub bbox_norm: NormRect,
    pub occluded: bool,
    pub element_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

impl GroundedElement {
    pub fn descriptor(&self) -> String {
        format!("{} \"{}\"", self.role.as_str(), self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub screenshot_ref: String,
    pub elements: Vec<GroundedElement>,
    pub viewport: Viewport,
    pub scroll_offset: (i64, i64),
    pub page_url: String,
    #[serde(default)]
    pub page_title: String,
}

impl Observation {
    pub fn element(&self, tag_id: u32) -> Option<&GroundedElement> {
        self.elements.iter().find(|e| e.tag_id == tag_id)
    }

    /// The element an input at `p` most plausibly lands on: visible elements
    /// win over occluded ones, then the smallest containing box.
    pub fn element_at(&self, p: NormPoint) -> Option<&GroundedElement> {
        self.elements
            .iter()
            .filter(|e| e.bbox_norm.contains(p))
            .min_by_key(|e| (e.occluded, e.bbox_norm.area(), e.tag_id))
    }

    /// Tag table handed to the model next to the screenshot.
    pub fn tag_table(&self) -> String {
        if self.elements.is_empty() {
            return "(no interactive elements in view)".to_string();
        }
        let mut out = String::new();
        for e in &self.elements {
            let b = e.bbox_norm;
            let _ = write!(out, "[{}] {} \"{}\" box=({}, {}, {}, {})", e.tag_id, e.role.as_str(), e.label, b.x, b.y, b.w, b.h);
            if let Some(t) = &e.input_type {
                let _ = write!(out, " type={t}");
            }
            if !e.options.is_empty() {
                let _ = write!(out, " options={:?}", e.options);
            }
            if e.occluded {
                out.push_str(" (occluded)");
            }
            out.push('\n');
        }
        out
    }
}

/// Turns a driver snapshot into an [`Observation`].
pub trait GroundingProvider: Send + Sync {
    fn ground(&self, raw: &RawPage, screenshot: &Screenshot) -> Result<Observation, GroundingError>;
}

/// Geometry-only grounding over the driver's element dump.
#[derive(Debug, Default, Clone, Copy)]
pub struct GeometryGrounding;

impl GroundingProvider for GeometryGrounding {
    fn ground(&self, raw: &RawPage, screenshot: &Screenshot) -> Result<Observation, GroundingError> {
        let mut obs = ground_observation(raw, raw.viewport)?;
        obs.screenshot_ref = screenshot.digest();
        Ok(obs)
    }
}

/// Filters interactive, visible elements, orders them top-to-bottom then
/// left-to-right and tags them 1..N. Elements fully covered by a higher
/// element are kept but flagged `occluded`.
pub fn ground_observation(raw: &RawPage, viewport: Viewport) -> Result<Observation, GroundingError> {
    viewport.check()?;
    let screen = PixelRect::new(0.0, 0.0, viewport.width as f64, viewport.height as f64);

    for e in &raw.elements {
        if !e.bbox_px.is_finite() {
            return Err(GroundingError::BadGeometry(e.element_ref.clone()));
        }
    }

    // (index into raw.elements, clipped rect)
    let painted: Vec<(usize, PixelRect)> = raw
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.visible)
        .filter_map(|(i, e)| e.bbox_px.intersect(&screen).map(|r| (i, r)))
        .filter(|(_, r)| r.area() >= 1.0)
        .collect();

    let mut candidates: Vec<(usize, PixelRect, bool)> = painted
        .iter()
        .filter(|(i, _)| raw.elements[*i].interactive)
        .map(|&(i, clip)| {
            let z = raw.elements[i].z_index;
            let occluded = painted
                .iter()
                .any(|&(j, other)| j != i && raw.elements[j].z_index > z && other.covers(&clip));
            (i, clip, occluded)
        })
        .collect();

    candidates.sort_by(|a, b| {
        a.1.y
            .total_cmp(&b.1.y)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.0.cmp(&b.0))
    });

    let mut elements = Vec::with_capacity(candidates.len());
    for (n, (i, clip, occluded)) in candidates.into_iter().enumerate() {
        let e = &raw.elements[i];
        let role = ElementRole::from_driver(&e.role);
        elements.push(GroundedElement {
            tag_id: n as u32 + 1,
            role,
            label: e.label.trim().to_string(),
            bbox_norm: normalize_rect(&clip, viewport)?,
            occluded,
            element_ref: e.element_ref.clone(),
            input_type: e.input_type.clone(),
            options: if role == ElementRole::Select { e.options.clone() } else { Vec::new() },
        });
    }

    Ok(Observation {
        screenshot_ref: String::new(),
        elements,
        viewport,
        scroll_offset: raw.scroll_offset,
        page_url: raw.url.clone(),
        page_title: raw.title.clone(),
    })
}

/// Draws each tag's box and `[n]` label onto an SVG screenshot. Returns
/// `None` for other image formats, which would need a raster decoder.
pub fn overlay_tags(screenshot: &Screenshot, obs: &Observation) -> Option<Vec<u8>> {
    if screenshot.media_type != "image/svg+xml" {
        return None;
    }
    let svg = std::str::from_utf8(screenshot.bytes()).ok()?;
    let end = svg.rfind("</svg>")?;
    let (w, h) = (obs.viewport.width as f64, obs.viewport.height as f64);
    let px = |v: u16, size: f64| v as f64 * size / ACTION_SPACE as f64;
    let mut marks = String::from("<g class=\"tags\">");
    for e in &obs.elements {
        let b = e.bbox_norm;
        let (x, y) = (px(b.x, w), px(b.y, h));
        let _ = write!(
            marks,
            r##"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#e0218a" stroke-width="2"/><text x="{x:.1}" y="{:.1}" font-size="12" fill="#e0218a">[{}]</text>"##,
            px(b.w, w),
            px(b.h, h),
            (y - 2.0).max(10.0),
            e.tag_id
        );
    }
    marks.push_str("</g>");
    let mut out = String::with_capacity(svg.len() + marks.len());
    out.push_str(&svg[..end]);
    out.push_str(&marks);
    out.push_str(&svg[end..]);
    Some(out.into_bytes())
}

//! Layout domain types and the canonical JSON form.
//!
//! ```json
//! {"canvas": {"width": 600, "height": 800},
//!  "elements": [{"id": "e0", "type": "underlay", "bbox": [0.1, 0.6, 0.8, 0.3], "asset": "#ffffffc0"}]}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    Text,
    Logo,
    Underlay,
}

impl ElementType {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementType::Text => "text",
            ElementType::Logo => "logo",
            ElementType::Underlay => "underlay",
        }
    }

    pub fn is_underlay(self) -> bool {
        self == ElementType::Underlay
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown element type {0:?}")]
pub struct UnknownElementType(pub String);

impl FromStr for ElementType {
    type Err = UnknownElementType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ElementType::Text),
            "logo" => Ok(ElementType::Logo),
            "underlay" => Ok(ElementType::Underlay),
            other => Err(UnknownElementType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ElementType,
    pub bbox: BBox,
    /// `#rrggbb`, `#rrggbbaa` or an image path. Only the compositor reads it.
    #[serde(default)]
    pub asset: Option<String>,
}

impl Element {
    pub fn new(id: impl Into<String>, kind: ElementType, bbox: BBox) -> Self {
        Element {
            id: id.into(),
            kind,
            bbox,
            asset: None,
        }
    }

    pub fn with_asset(mut self, asset: impl Into<String>) -> Self {
        self.asset = Some(asset.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

/// Typed boxes on a canvas. List order is render order, back to front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub canvas: Canvas,
    #[serde(default)]
    pub elements: Vec<Element>,
}

/// A canvas rectangle that element boxes must stay out of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtectedRegion {
    pub region: BBox,
}

impl ProtectedRegion {
    pub fn new(region: BBox) -> Self {
        ProtectedRegion { region }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "id")]
pub enum Violation {
    NonPositiveCanvas,
    EmptyId,
    DuplicateId(String),
    NonFinite(String),
    NonPositiveSize(String),
    OutOfCanvas(String),
    /// Warning only: an underlay listed after a non-underlay renders on top of it.
    UnderlayAfterContent(String),
}

impl Violation {
    pub fn is_warning(&self) -> bool {
        matches!(self, Violation::UnderlayAfterContent(_))
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveCanvas => write!(f, "canvas dimensions must be positive"),
            Violation::EmptyId => write!(f, "element id is empty"),
            Violation::DuplicateId(id) => write!(f, "duplicate element id {id:?}"),
            Violation::NonFinite(id) => write!(f, "element {id:?} has a non-finite bbox"),
            Violation::NonPositiveSize(id) => write!(f, "element {id:?} has non-positive size"),
            Violation::OutOfCanvas(id) => write!(f, "element {id:?} extends beyond the canvas"),
            Violation::UnderlayAfterContent(id) => {
                write!(f, "underlay {id:?} renders above a non-underlay element")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum LayoutIoError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing layout JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Layout {
    pub fn new(width: u32, height: u32) -> Self {
        Layout {
            canvas: Canvas { width, height },
            elements: Vec::new(),
        }
    }

    pub fn with_element(mut self, e: Element) -> Self {
        self.elements.push(e);
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn boxes(&self) -> impl Iterator<Item = &BBox> {
        self.elements.iter().map(|e| &e.bbox)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_layout(self)
    }

    /// No hard violations (warnings are allowed).
    pub fn is_valid(&self) -> bool {
        self.validate().iter().all(Violation::is_warning)
    }

    pub fn from_json(s: &str) -> Result<Layout, LayoutIoError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn load(path: &Path) -> Result<Layout, LayoutIoError> {
        let text = std::fs::read_to_string(path).map_err(|source| LayoutIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Layout::from_json(&text)
    }
}

/// Every violated invariant, one descriptor each. Empty means valid.
pub fn validate_layout(l: &Layout) -> Vec<Violation> {
    let mut out = Vec::new();
    if l.canvas.width == 0 || l.canvas.height == 0 {
        out.push(Violation::NonPositiveCanvas);
    }
    let mut seen = HashSet::new();
    let mut content_seen = false;
    for e in &l.elements {
        if e.id.is_empty() {
            out.push(Violation::EmptyId);
        } else if !seen.insert(e.id.as_str()) {
            out.push(Violation::DuplicateId(e.id.clone()));
        }
        let b = &e.bbox;
        if !b.is_finite() {
            out.push(Violation::NonFinite(e.id.clone()));
        } else if !b.has_positive_size() {
            out.push(Violation::NonPositiveSize(e.id.clone()));
        } else if !b.within_canvas() {
            out.push(Violation::OutOfCanvas(e.id.clone()));
        }
        if e.kind.is_underlay() {
            if content_seen {
                out.push(Violation::UnderlayAfterContent(e.id.clone()));
            }
        } else {
            content_seen = true;
        }
    }
    out
}

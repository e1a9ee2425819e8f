//! Axis-aligned rectangles in normalized canvas units.
//!
//! `(x, y)` is the top-left corner, the canvas spans `[0, 1]` on both axes.
//! Boundaries are closed for containment and contribute zero area to
//! overlaps, so two boxes that merely touch do not intersect.

use serde::{Deserialize, Serialize};

/// Tolerance used for canvas bounds and containment checks.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// The six alignment axes: left, horizontal center, right, top, vertical
/// center, bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Left,
    CenterX,
    Right,
    Top,
    CenterY,
    Bottom,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Left,
        Axis::CenterX,
        Axis::Right,
        Axis::Top,
        Axis::CenterY,
        Axis::Bottom,
    ];

    pub fn is_horizontal(self) -> bool {
        matches!(self, Axis::Left | Axis::CenterX | Axis::Right)
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn full_canvas() -> Self {
        BBox::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x + 0.5 * self.w
    }

    pub fn center_y(&self) -> f64 {
        self.y + 0.5 * self.h
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Left => self.x,
            Axis::CenterX => self.center_x(),
            Axis::Right => self.right(),
            Axis::Top => self.y,
            Axis::CenterY => self.center_y(),
            Axis::Bottom => self.bottom(),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn has_positive_size(&self) -> bool {
        self.w > 0.0 && self.h > 0.0
    }

    /// True when the box lies inside the unit canvas (within [`EPS`]).
    pub fn within_canvas(&self) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= 1.0 + EPS && self.bottom() <= 1.0 + EPS
    }

    /// Full set of box invariants for a validated layout.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.has_positive_size() && self.within_canvas()
    }

    /// Horizontal extent of the overlap with `other` (negative when apart).
    pub fn overlap_x(&self, other: &BBox) -> f64 {
        self.right().min(other.right()) - self.x.max(other.x)
    }

    pub fn overlap_y(&self, other: &BBox) -> f64 {
        self.bottom().min(other.bottom()) - self.y.max(other.y)
    }

    /// Axis-aligned separation: the larger of the horizontal and vertical
    /// gaps. Negative when the boxes overlap, zero when they touch.
    pub fn gap(&self, other: &BBox) -> f64 {
        (-self.overlap_x(other)).max(-self.overlap_y(other))
    }
}

pub fn area(b: &BBox) -> f64 {
    b.w * b.h
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let ox = a.overlap_x(b);
    let oy = a.overlap_y(b);
    if ox <= 0.0 || oy <= 0.0 {
        0.0
    } else {
        ox * oy
    }
}

/// `inner` lies inside `outer`, boundary contact allowed.
pub fn contains(outer: &BBox, inner: &BBox) -> bool {
    inner.x >= outer.x - EPS
        && inner.y >= outer.y - EPS
        && inner.right() <= outer.right() + EPS
        && inner.bottom() <= outer.bottom() + EPS
}

/// Moves the box back onto the canvas, shrinking only the sides that are
/// larger than the canvas itself.
pub fn clamp_to_canvas(b: &BBox) -> BBox {
    let w = b.w.min(1.0);
    let h = b.h.min(1.0);
    let x = b.x.clamp(0.0, 1.0 - w);
    let y = b.y.clamp(0.0, 1.0 - h);
    BBox::new(x, y, w, h)
}

//! Axis-aligned box geometry in continuous pixel coordinates.
//!
//! Boxes are closed intervals `[x0, x1] × [y0, y1]`; width is `x1 - x0` with no
//! "+1 pixel" convention. Zero-area boxes are representable and valid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDims", into = "RawDims")]
pub struct ImageDims {
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct RawDims {
    width: u32,
    height: u32,
}

impl TryFrom<RawDims> for ImageDims {
    type Error = GeometryError;

    fn try_from(raw: RawDims) -> Result<Self, Self::Error> {
        ImageDims::new(raw.width, raw.height)
    }
}

impl From<ImageDims> for RawDims {
    fn from(d: ImageDims) -> Self {
        RawDims { width: d.width, height: d.height }
    }
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::ZeroDimension { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Parses `WxH`, e.g. `512x512`.
impl FromStr for ImageDims {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::BadDims(s.to_string());
        let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let width = w.trim().parse().map_err(|_| bad())?;
        let height = h.trim().parse().map_err(|_| bad())?;
        ImageDims::new(width, height)
    }
}

/// A box given by its top-left `(x0, y0)` and bottom-right `(x1, y1)` corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    #[inline]
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Converts a COCO-style `(x, y, width, height)` box to corner form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Area, zero for inverted boxes.
    #[inline]
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn from_coords(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|v| v.is_finite())
    }

    /// True when both sides are non-negative, i.e. the corners are ordered.
    pub fn is_ordered(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() == 0.0
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.x0 * k, self.y0 * k, self.x1 * k, self.y1 * k)
    }

    /// Area of the overlap with `other`.
    pub fn intersection_area(&self, other: &PixelBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &PixelBox) -> PixelBox {
        PixelBox::new(self.x0.min(other.x0), self.y0.min(other.y0), self.x1.max(other.x1), self.y1.max(other.y1))
    }

    /// Total order on the four coordinates, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &PixelBox) -> std::cmp::Ordering {
        self.x0
            .total_cmp(&other.x0)
            .then(self.y0.total_cmp(&other.y0))
            .then(self.x1.total_cmp(&other.x1))
            .then(self.y1.total_cmp(&other.y1))
    }
}

/// Intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU in `[-1, 1]`: IoU minus the fraction of the enclosing hull
/// not covered by the union. Zero when the hull is empty.
pub fn generalized_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    if hull <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    (inter / union - (hull - union) / hull).clamp(-1.0, 1.0)
}

/// One broken box invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxViolation {
    NonFinite,
    InvertedX,
    InvertedY,
    OutOfBoundsX,
    OutOfBoundsY,
}

impl fmt::Display for BoxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoxViolation::NonFinite => "non-finite coordinate",
            BoxViolation::InvertedX => "inverted-x (x0 > x1)",
            BoxViolation::InvertedY => "inverted-y (y0 > y1)",
            BoxViolation::OutOfBoundsX => "out-of-bounds-x",
            BoxViolation::OutOfBoundsY => "out-of-bounds-y",
        };
        f.write_str(s)
    }
}

/// Result of [`validate_box`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validity {
    pub violations: Vec<BoxViolation>,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, v: BoxViolation) -> bool {
        self.violations.contains(&v)
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Reports every invariant `b` violates with respect to `dims`.
pub fn validate_box(b: &PixelBox, dims: ImageDims) -> Validity {
    let mut violations = Vec::new();
    if !b.is_finite() {
        violations.push(BoxViolation::NonFinite);
        return Validity { violations };
    }
    if b.x0 > b.x1 {
        violations.push(BoxViolation::InvertedX);
    }
    if b.y0 > b.y1 {
        violations.push(BoxViolation::InvertedY);
    }
    let w = f64::from(dims.width());
    let h = f64::from(dims.height());
    let out = |lo: f64, hi: f64, extent: f64| lo.min(hi) < 0.0 || lo.max(hi) > extent;
    if out(b.x0, b.x1, w) {
        violations.push(BoxViolation::OutOfBoundsX);
    }
    if out(b.y0, b.y1, h) {
        violations.push(BoxViolation::OutOfBoundsY);
    }
    Validity { violations }
}

//! Shared domain types and box geometry.
//!
//! Boxes are center-format `(cx, cy, w, h)` in continuous pixel coordinates.
//! Corner-format input is converted on ingest (see [`BBox::from_corners`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box dimensions must be positive and finite, got w={w} h={h}")]
    InvalidSize { w: f64, h: f64 },
    #[error("box center must be finite, got ({cx}, {cy})")]
    InvalidCenter { cx: f64, cy: f64 },
    #[error("score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("search area requires alpha > 1, beta > 1, tau > 0 (got alpha={alpha}, beta={beta}, tau={tau})")]
    InvalidSearchParams { alpha: f64, beta: f64, tau: f64 },
}

/// Axis-aligned box in center format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::InvalidSize { w, h });
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidCenter { cx, cy });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from `(x1, y1)` top-left and `(x2, y2)` bottom-right corners.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Width over height. Derived, never stored.
    pub fn aspect_ratio(&self) -> f64 {
        self.w / self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Inclusive point-in-box test.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.left() && x <= self.right() && y >= self.top() && y <= self.bottom()
    }

    /// True when `other` lies entirely inside `self` with a nonzero margin on every side.
    pub fn strictly_contains(&self, other: &BBox) -> bool {
        self.left() < other.left()
            && self.right() > other.right()
            && self.top() < other.top()
            && self.bottom() > other.bottom()
    }

    /// Intersects the box with the image rectangle `[0, width] x [0, height]`.
    ///
    /// Returns `None` when nothing of the box remains.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<BBox> {
        let x1 = self.left().max(0.0);
        let y1 = self.top().max(0.0);
        let x2 = self.right().min(width);
        let y2 = self.bottom().min(height);
        if x2 > x1 && y2 > y1 {
            Some(BBox {
                cx: (x1 + x2) / 2.0,
                cy: (y1 + y2) / 2.0,
                w: x2 - x1,
                h: y2 - y1,
            })
        } else {
            None
        }
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    // Edge-derived areas keep iou(a, a) exactly 1.
    let area = |r: &BBox| (r.right() - r.left()) * (r.bottom() - r.top());
    let union = area(a) + area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Where a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Detector,
    FlowRecovered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_id: String,
    pub bbox: BBox,
    pub class_label: String,
    pub score: f64,
    pub source: Source,
}

impl Detection {
    pub fn new(
        frame_id: impl Into<String>,
        bbox: BBox,
        class_label: impl Into<String>,
        score: f64,
    ) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::InvalidScore(score));
        }
        Ok(Self {
            frame_id: frame_id.into(),
            bbox,
            class_label: class_label.into(),
            score,
            source: Source::Detector,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.bbox.cx, self.bbox.cy)
    }
}

/// One frame of a sequence. Adjacent indices are consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub sequence_id: String,
    pub index: u32,
    pub image_path: String,
}

/// Enlargement coefficients for the search area around a detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchAreaParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for SearchAreaParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 3.0,
            tau: 30.0,
        }
    }
}

impl SearchAreaParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.alpha > 1.0 && self.beta > 1.0 && self.tau > 0.0 {
            Ok(())
        } else {
            Err(GeometryError::InvalidSearchParams {
                alpha: self.alpha,
                beta: self.beta,
                tau: self.tau,
            })
        }
    }
}

/// Search area `(cx, cy, alpha*w + tau, beta*h + tau)` around a detection.
pub fn search_area(d: &Detection, params: &SearchAreaParams) -> Result<BBox, GeometryError> {
    params.validate()?;
    let b = &d.bbox;
    Ok(BBox {
        cx: b.cx,
        cy: b.cy,
        w: params.alpha * b.w + params.tau,
        h: params.beta * b.h + params.tau,
    })
}

/// Whether the detection's center lies inside `area`, edges included.
pub fn contains_center(area: &BBox, d: &Detection) -> bool {
    area.contains_point(d.bbox.cx, d.bbox.cy)
}

//! Axis-aligned boxes and the similarity measures used for association.
//!
//! Every measure here is a pure function of its arguments and is symmetric
//! under argument swap. [`fish_iou`] is the tracker's default association
//! score; [`iou`], [`giou`] and [`diou`] are kept as ablation baselines.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box [{x1}, {y1}, {x2}, {y2}] must have finite corners with x2 > x1 and y2 > y1")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("invalid FishIoU parameters: {0}")]
    InvalidParams(String),
}

/// Axis-aligned box in pixel coordinates, top-left origin, corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// From MOT-style `(left, top, width, height)`.
    pub fn from_ltwh(left: f64, top: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(left, top, left + width, top + height)
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    /// Rebuilds a box from `(center, area, aspect)` where aspect = w / h.
    pub fn from_center_area_aspect(
        cx: f64,
        cy: f64,
        area: f64,
        aspect: f64,
    ) -> Result<Self, GeometryError> {
        let w = (area * aspect).sqrt();
        let h = (area / aspect).sqrt();
        Self::from_center(cx, cy, w, h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn aspect(&self) -> f64 {
        self.width() / self.height()
    }
    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// True when `other` lies strictly inside `self` on every edge.
    pub fn strictly_contains(&self, other: &BoundingBox) -> bool {
        other.x1 > self.x1 && other.y1 > self.y1 && other.x2 < self.x2 && other.y2 < self.y2
    }

    fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    fn enclosing(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Which horizontal edge of a box is treated as the fish's head when
/// insetting the central region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEdge {
    /// Front inset applied at `x1`, rear inset at `x2`.
    #[default]
    Left,
    /// Front inset applied at `x2`, rear inset at `x1`.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FishIouParams {
    /// Fraction of the width removed at the front edge.
    pub front_inset: f64,
    /// Fraction of the height removed at both top and bottom.
    pub vertical_inset: f64,
    /// Fraction of the width removed at the rear edge.
    pub rear_inset: f64,
    /// Weights for IoU, central IoU, aspect consistency, area consistency
    /// and the scaled center-distance penalty, in that order.
    pub weights: [f64; 5],
    /// Area (px²) at which the center-distance penalty reaches `1 - 1/e` of
    /// full strength.
    pub small_target_area: f64,
    pub front: FrontEdge,
}

impl Default for FishIouParams {
    fn default() -> Self {
        Self {
            front_inset: 0.15,
            vertical_inset: 0.3,
            rear_inset: 0.25,
            weights: [1.0, 0.3, 0.1, 0.2, 0.4],
            small_target_area: 1000.0,
            front: FrontEdge::Left,
        }
    }
}

impl FishIouParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let insets = [self.front_inset, self.vertical_inset, self.rear_inset];
        if insets.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GeometryError::InvalidParams("insets must be finite and non-negative".into()));
        }
        if self.front_inset + self.rear_inset >= 1.0 {
            return Err(GeometryError::InvalidParams(format!(
                "front + rear inset must be < 1 (got {})",
                self.front_inset + self.rear_inset
            )));
        }
        if 2.0 * self.vertical_inset >= 1.0 {
            return Err(GeometryError::InvalidParams(format!(
                "twice the vertical inset must be < 1 (got {})",
                2.0 * self.vertical_inset
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GeometryError::InvalidParams("weights must be finite and non-negative".into()));
        }
        if !(self.small_target_area.is_finite() && self.small_target_area > 0.0) {
            return Err(GeometryError::InvalidParams("small_target_area must be positive".into()));
        }
        Ok(())
    }

    /// The value [`fish_iou`] takes for two identical boxes.
    pub fn max_similarity(&self) -> f64 {
        self.weights[0] + self.weights[1] + self.weights[2] + self.weights[3]
    }
}

pub fn iou(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    let inter = b1.intersection_area(b2);
    let union = b1.area() + b2.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Squared center distance over the squared diagonal of the enclosing box.
pub fn center_distance_penalty(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    let (cx1, cy1) = b1.center();
    let (cx2, cy2) = b2.center();
    let enc = b1.enclosing(b2);
    let diag_sq = enc.width().powi(2) + enc.height().powi(2);
    if diag_sq <= 0.0 {
        return 0.0;
    }
    ((cx1 - cx2).powi(2) + (cy1 - cy2).powi(2)) / diag_sq
}

pub fn central_region(b: &BoundingBox, p: &FishIouParams) -> BoundingBox {
    let (w, h) = (b.width(), b.height());
    let (left, right) = match p.front {
        FrontEdge::Left => (p.front_inset, p.rear_inset),
        FrontEdge::Right => (p.rear_inset, p.front_inset),
    };
    BoundingBox {
        x1: b.x1 + left * w,
        y1: b.y1 + p.vertical_inset * h,
        x2: b.x2 - right * w,
        y2: b.y2 - p.vertical_inset * h,
    }
}

pub fn central_iou(b1: &BoundingBox, b2: &BoundingBox, p: &FishIouParams) -> f64 {
    iou(&central_region(b1, p), &central_region(b2, p))
}

fn min_max_ratio(a: f64, b: f64) -> f64 {
    a.min(b) / a.max(b)
}

pub fn aspect_ratio_consistency(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    min_max_ratio(b1.aspect(), b2.aspect())
}

pub fn area_ratio_consistency(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    min_max_ratio(b1.area(), b2.area())
}

/// `1 - exp(-min_area / small_target_area)`: shrinks the distance penalty for
/// small targets.
pub fn small_target_scale(b1: &BoundingBox, b2: &BoundingBox, p: &FishIouParams) -> f64 {
    1.0 - (-b1.area().min(b2.area()) / p.small_target_area).exp()
}

pub fn fish_iou(b1: &BoundingBox, b2: &BoundingBox, p: &FishIouParams) -> f64 {
    let [w1, w2, w3, w4, w5] = p.weights;
    w1 * iou(b1, b2) + w2 * central_iou(b1, b2, p) + w3 * aspect_ratio_consistency(b1, b2)
        + w4 * area_ratio_consistency(b1, b2)
        - w5 * small_target_scale(b1, b2, p) * center_distance_penalty(b1, b2)
}

pub fn giou(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    let inter = b1.intersection_area(b2);
    let union = b1.area() + b2.area() - inter;
    let enc_area = b1.enclosing(b2).area();
    inter / union - (enc_area - union) / enc_area
}

pub fn diou(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    iou(b1, b2) - center_distance_penalty(b1, b2)
}

/// Similarity measure used to build association costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AssocMetric {
    #[default]
    #[value(name = "fishiou")]
    #[serde(rename = "fishiou")]
    FishIou,
    Iou,
    Giou,
    Diou,
}

impl AssocMetric {
    pub fn similarity(&self, b1: &BoundingBox, b2: &BoundingBox, p: &FishIouParams) -> f64 {
        match self {
            AssocMetric::FishIou => fish_iou(b1, b2, p),
            AssocMetric::Iou => iou(b1, b2),
            AssocMetric::Giou => giou(b1, b2),
            AssocMetric::Diou => diou(b1, b2),
        }
    }

    /// Acceptance gate used when the configuration does not set one.
    pub fn default_gate(&self) -> f64 {
        match self {
            AssocMetric::FishIou => 0.45,
            AssocMetric::Iou => 0.3,
            AssocMetric::Giou => 0.1,
            AssocMetric::Diou => 0.1,
        }
    }
}

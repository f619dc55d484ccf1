//! Bounding-box geometry shared by the tracking and evaluation modules.
//!
//! Boxes are continuous regions in pixel coordinates, stored in
//! top-left/width/height ("tlwh") form. Area is `width * height` with no
//! pixel-index "+1" convention, so overlap ratios are scale invariant.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Class id assigned to people; the pipeline is single class.
pub const PERSON_CLASS_ID: i32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    NonPositiveSize { width: f64, height: f64 },
    ScoreOutOfRange { score: f64 },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::NonPositiveSize { width, height } => {
                write!(f, "box size must be positive, got {width}x{height}")
            }
            GeometryError::ScoreOutOfRange { score } => {
                write!(f, "confidence score {score} outside [0, 1]")
            }
        }
    }
}

impl std::error::Error for GeometryError {}

/// Axis-aligned bounding box in tlwh pixel coordinates.
///
/// `width` and `height` must be positive; negative `left`/`top` are legal
/// (boxes may extend past the frame edge).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if !width.is_finite() || !height.is_finite() || width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::NonPositiveSize { width, height });
        }
        Ok(BBox { left, top, width, height })
    }

    /// Measurement form used by the motion filter: center-x, center-y, width, height.
    pub fn to_cxcywh(&self) -> [f64; 4] {
        [
            self.left + self.width / 2.0,
            self.top + self.height / 2.0,
            self.width,
            self.height,
        ]
    }

    /// Inverse of [`BBox::to_cxcywh`].
    pub fn from_cxcywh(z: [f64; 4]) -> Result<Self, GeometryError> {
        let [cx, cy, w, h] = z;
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Bottom-center of the box, used as a person's floor position.
    pub fn foot_point(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height)
    }
}

/// One detector output row: a scored box on a 1-based frame index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
    pub class_id: i32,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, score: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::ScoreOutOfRange { score });
        }
        Ok(Detection { frame, bbox, score, class_id: PERSON_CLASS_ID })
    }
}

/// Intersection-over-union of two boxes: 1 for identical boxes, 0 when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Pairwise (1 - IoU) cost matrix, shape `rows.len() x cols.len()`.
pub fn iou_distance_matrix(rows: &[BBox], cols: &[BBox]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| cols.iter().map(|c| 1.0 - iou(r, c)).collect())
        .collect()
}

//! Axis-aligned boxes and run-length encoded binary masks.
//!
//! Boxes use continuous half-open pixel coordinates: `(x1, y1)` is the
//! upper-left corner and `(x2, y2)` the lower-right one. Masks are stored as
//! row-major runs that alternate between background and foreground, always
//! starting with a (possibly empty) background run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box [{0}, {1}, {2}, {3}]: coordinates must be finite with x2 >= x1 and y2 >= y1")]
    InvalidBox(f64, f64, f64, f64),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("mask run lengths sum to {sum}, expected {expected}")]
    BadRunLengths { sum: u64, expected: u64 },
    #[error("mask dimensions {got_h}x{got_w} do not match {want_h}x{want_w}")]
    DimensionMismatch {
        got_h: u32,
        got_w: u32,
        want_h: u32,
        want_w: u32,
    },
    #[error("pixel buffer has {got} cells, expected {expected}")]
    BufferSize { got: usize, expected: usize },
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x2 < x1 || y2 < y1 {
            return Err(GeometryError::InvalidBox(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box from a center point and extents. Negative extents are clamped to zero.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let (w, h) = (w.max(0.0), h.max(0.0));
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
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

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Area of the overlap with `other`, zero for touching or disjoint boxes.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Clip to `[0, width) x [0, height)`. Returns `None` when nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        let x1 = self.x1.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        let x2 = self.x2.clamp(0.0, width);
        let y2 = self.y2.clamp(0.0, height);
        if x2 > x1 && y2 > y1 {
            Some(BBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over the area of `recent` (the "foreground" box).
///
/// Unlike [`iou`] this stays high when `recent` is a partially occluded view
/// of `background`.
pub fn iof(recent: &BBox, background: &BBox) -> f64 {
    let area = recent.area();
    if area <= 0.0 {
        return 0.0;
    }
    (recent.intersection_area(background) / area).clamp(0.0, 1.0)
}

/// Coordinate-wise mean of a box sequence.
pub fn mean_box<'a, I>(history: I) -> Result<BBox, GeometryError>
where
    I: IntoIterator<Item = &'a BBox>,
{
    let mut sum = [0.0f64; 4];
    let mut n = 0usize;
    for b in history {
        for (s, c) in sum.iter_mut().zip(b.coords()) {
            *s += c;
        }
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptyTrajectory);
    }
    let n = n as f64;
    // The mean of valid boxes is valid up to rounding; guard the corner anyway.
    let [x1, y1, x2, y2] = sum.map(|s| s / n);
    BBox::new(x1, y1, x2.max(x1), y2.max(y1))
}

/// Binary mask as row-major alternating run lengths, background run first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RleWire", into = "RleWire")]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

/// Wire form: `{"size":[H,W],"counts":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RleWire {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl TryFrom<RleWire> for RleMask {
    type Error = GeometryError;

    fn try_from(w: RleWire) -> Result<Self, Self::Error> {
        RleMask::from_counts(w.size[0], w.size[1], w.counts)
    }
}

impl From<RleMask> for RleWire {
    fn from(m: RleMask) -> Self {
        RleWire {
            size: [m.height, m.width],
            counts: m.counts,
        }
    }
}

impl RleMask {
    pub fn from_counts(height: u32, width: u32, counts: Vec<u32>) -> Result<Self, GeometryError> {
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = height as u64 * width as u64;
        if sum != expected {
            return Err(GeometryError::BadRunLengths { sum, expected });
        }
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    /// All-background mask.
    pub fn empty(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            counts: vec![height * width],
        }
    }

    /// Encode a row-major grid of `height * width` cells.
    pub fn encode(height: u32, width: u32, cells: &[bool]) -> Result<Self, GeometryError> {
        let expected = height as usize * width as usize;
        if cells.len() != expected {
            return Err(GeometryError::BufferSize {
                got: cells.len(),
                expected,
            });
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &c in cells {
            if c != current {
                counts.push(run);
                run = 0;
                current = c;
            }
            run += 1;
        }
        counts.push(run);
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut cells = Vec::with_capacity(self.len());
        let mut value = false;
        for &run in &self.counts {
            cells.extend(std::iter::repeat_n(value, run as usize));
            value = !value;
        }
        cells
    }

    /// Filled box rasterised onto a `height x width` grid. A pixel is set when
    /// its center lies inside the box.
    pub fn from_box(height: u32, width: u32, b: &BBox) -> Self {
        let mut cells = vec![false; height as usize * width as usize];
        let (c0, c1) = pixel_span(b.x1, b.x2, width);
        let (r0, r1) = pixel_span(b.y1, b.y2, height);
        for r in r0..r1 {
            let row = r * width as usize;
            cells[row + c0..row + c1].fill(true);
        }
        Self::encode(height, width, &cells).expect("buffer sized from dimensions")
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of foreground cells.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn check_dims(&self, height: u32, width: u32) -> Result<(), GeometryError> {
        if self.height != height || self.width != width {
            return Err(GeometryError::DimensionMismatch {
                got_h: self.height,
                got_w: self.width,
                want_h: height,
                want_w: width,
            });
        }
        Ok(())
    }
}

/// Half-open index range of pixels whose centers fall in `[lo, hi)`.
pub fn pixel_span(lo: f64, hi: f64, len: u32) -> (usize, usize) {
    let first = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).ceil().clamp(0.0, len as f64);
    let first = first.min(end);
    (first as usize, end as usize)
}

/// Pixel-wise OR of masks sharing the given dimensions.
pub fn union_masks<'a, I>(masks: I, height: u32, width: u32) -> Result<RleMask, GeometryError>
where
    I: IntoIterator<Item = &'a RleMask>,
{
    let mut acc = vec![false; height as usize * width as usize];
    for m in masks {
        m.check_dims(height, width)?;
        let mut pos = 0usize;
        let mut value = false;
        for &run in &m.counts {
            if value {
                acc[pos..pos + run as usize].fill(true);
            }
            pos += run as usize;
            value = !value;
        }
    }
    RleMask::encode(height, width, &acc)
}

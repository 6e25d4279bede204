//! Face detection by matching an elliptical head-outline template against a
//! binary edge map.
//!
//! For each template width `w` the template is the set of pixels of a `w` x
//! `round(1.3 w)` box lying inside the inscribed ellipse but outside the same
//! ellipse shrunk by `2 w / 64` pixels on both semi-axes. The score of a
//! placement is the fraction of template pixels that land on edge pixels.
//! Placements scoring at least `score_threshold` are reduced by greedy
//! non-maximum suppression in (score desc, y, x, w) order.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::edges::edge_bits;
use crate::error::VisionError;
use crate::image::GrayImage;

/// Height-to-width ratio of the head outline, as a fraction over 10.
const ASPECT_TENTHS: usize = 13;
/// Annulus thickness at a 64 px template width.
const THICKNESS_AT_64: f64 = 2.0;
/// Smallest box side a detector may report.
pub const MIN_BOX_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub score: f64,
}

impl FaceBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &FaceBox, b: &FaceBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x));
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Detection order: score descending, then top-left y, x, then width.
pub fn detection_order(a: &FaceBox, b: &FaceBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
        .then(a.w.cmp(&b.w))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorParams {
    /// Template widths in pixels, strictly ascending.
    pub scales: Vec<usize>,
    pub edge_percentile: f64,
    pub score_threshold: f64,
    pub nms_overlap: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            scales: (36..=84).step_by(3).collect(),
            edge_percentile: 85.0,
            score_threshold: 0.35,
            nms_overlap: 0.3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), VisionError> {
        if self.scales.is_empty() {
            return Err(VisionError::InvalidParams("scales must not be empty"));
        }
        if self.scales.windows(2).any(|p| p[0] >= p[1]) {
            return Err(VisionError::InvalidParams(
                "scales must be strictly ascending",
            ));
        }
        if self.scales[0] < MIN_BOX_SIDE {
            return Err(VisionError::InvalidParams("scales must be at least 16 px"));
        }
        if !(0.0..=100.0).contains(&self.edge_percentile) {
            return Err(VisionError::InvalidParams(
                "edge percentile must lie in [0, 100]",
            ));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(VisionError::InvalidParams(
                "score threshold must lie in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.nms_overlap) {
            return Err(VisionError::InvalidParams("nms overlap must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Height of the template box for a given width.
pub fn template_height(width: usize) -> usize {
    (width * ASPECT_TENTHS + 5) / 10
}

/// Elliptical annulus mask for one template width.
#[derive(Debug, Clone)]
pub struct HeadTemplate {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    /// `(dx, dy)` of every mask pixel, row-major.
    offsets: Vec<(usize, usize)>,
}

impl HeadTemplate {
    pub fn new(width: usize) -> Self {
        let height = template_height(width);
        let a = width as f64 / 2.0;
        let b = height as f64 / 2.0;
        let t = THICKNESS_AT_64 * width as f64 / 64.0;
        let (ai, bi) = (a - t, b - t);
        let mut mask = vec![false; width * height];
        let mut offsets = Vec::new();
        for j in 0..height {
            let dy = j as f64 + 0.5 - b;
            for i in 0..width {
                let dx = i as f64 + 0.5 - a;
                let outer = (dx / a) * (dx / a) + (dy / b) * (dy / b) <= 1.0;
                let inner =
                    ai > 0.0 && bi > 0.0 && (dx / ai) * (dx / ai) + (dy / bi) * (dy / bi) < 1.0;
                if outer && !inner {
                    mask[j * width + i] = true;
                    offsets.push((i, j));
                }
            }
        }
        Self {
            width,
            height,
            mask,
            offsets,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, dx: usize, dy: usize) -> bool {
        self.mask[dy * self.width + dx]
    }

    pub fn pixel_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }
}

/// Detects head outlines, returning boxes in detection order.
pub fn detect_faces(
    image: &GrayImage,
    params: &DetectorParams,
) -> Result<Vec<FaceBox>, VisionError> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    let min_w = params.scales[0];
    let min_h = template_height(min_w);
    if w < min_w || h < min_h {
        return Err(VisionError::ImageTooSmall {
            width: w,
            height: h,
            min_width: min_w,
            min_height: min_h,
        });
    }
    let edges = edge_bits(image, params.edge_percentile)?;
    let integral = Integral::new(&edges, w, h);

    let mut candidates = Vec::new();
    for &scale in &params.scales {
        let template = HeadTemplate::new(scale);
        let (tw, th) = (template.width(), template.height());
        if tw > w || th > h {
            continue;
        }
        let count = template.pixel_count();
        if count == 0 {
            continue;
        }
        let denom = count as f64;
        for y in 0..=h - th {
            for x in 0..=w - tw {
                // hits <= edges in the box, so this bound never discards a
                // placement that could reach the threshold
                let in_box = integral.sum(x, y, tw, th);
                if (in_box as f64 / denom) < params.score_threshold {
                    continue;
                }
                let base = y * w + x;
                let hits = template
                    .offsets()
                    .iter()
                    .filter(|&&(dx, dy)| edges[base + dy * w + dx])
                    .count();
                let score = hits as f64 / denom;
                if score >= params.score_threshold {
                    candidates.push(FaceBox {
                        x,
                        y,
                        w: tw,
                        h: th,
                        score,
                    });
                }
            }
        }
    }
    candidates.sort_by(detection_order);
    Ok(suppress(candidates, params.nms_overlap))
}

/// Greedy non-maximum suppression over boxes already in detection order.
pub fn suppress(sorted: Vec<FaceBox>, max_overlap: f64) -> Vec<FaceBox> {
    let mut kept: Vec<FaceBox> = Vec::new();
    for cand in sorted {
        if kept.iter().all(|k| iou(k, &cand) <= max_overlap) {
            kept.push(cand);
        }
    }
    kept
}

struct Integral {
    stride: usize,
    table: Vec<u32>,
}

impl Integral {
    fn new(bits: &[bool], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut table = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += bits[y * w + x] as u32;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { stride, table }
    }

    fn sum(&self, x: usize, y: usize, w: usize, h: usize) -> u32 {
        let s = self.stride;
        self.table[(y + h) * s + x + w] + self.table[y * s + x]
            - self.table[y * s + x + w]
            - self.table[(y + h) * s + x]
    }
}

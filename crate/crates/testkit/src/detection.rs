//! Exhaustive detector: every scale, every placement, direct hit counting,
//! full sort and quadratic suppression.

use mfr_core::{DetectorParams, FaceBox, GrayImage};
use rand::Rng;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Edge mask: nonzero magnitudes at or above the `floor(p n / 100)`-th
/// smallest nonzero magnitude.
pub fn edge_mask(img: &GrayImage, percentile: f64) -> Vec<Vec<bool>> {
    let (w, h) = (img.width(), img.height());
    let mut mag = vec![vec![0.0f64; w]; h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..3 {
                for i in 0..3 {
                    let v = img.get(x + i - 1, y + j - 1);
                    gx += SOBEL_X[j][i] * v;
                    gy += SOBEL_Y[j][i] * v;
                }
            }
            mag[y][x] = (gx * gx + gy * gy).sqrt();
        }
    }
    let mut nonzero: Vec<f64> = mag.iter().flatten().copied().filter(|&m| m > 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    let rank = (percentile * nonzero.len() as f64 / 100.0).floor() as usize;
    let Some(&threshold) = nonzero.get(rank) else {
        return vec![vec![false; w]; h];
    };
    mag.iter()
        .map(|row| row.iter().map(|&m| m > 0.0 && m >= threshold).collect())
        .collect()
}

/// Template membership of pixel `(i, j)` in a `width`-wide head outline.
pub fn in_annulus(width: usize, i: usize, j: usize) -> bool {
    let height = ((width as f64) * 1.3).round() as usize;
    let (a, b) = (width as f64 / 2.0, height as f64 / 2.0);
    let t = 2.0 * width as f64 / 64.0;
    let dx = i as f64 + 0.5 - a;
    let dy = j as f64 + 0.5 - b;
    let outer = (dx / a).powi(2) + (dy / b).powi(2) <= 1.0;
    let (ai, bi) = (a - t, b - t);
    let inner = ai > 0.0 && bi > 0.0 && (dx / ai).powi(2) + (dy / bi).powi(2) < 1.0;
    outer && !inner
}

fn overlap(a: &FaceBox, b: &FaceBox) -> f64 {
    let x0 = a.x.max(b.x) as f64;
    let y0 = a.y.max(b.y) as f64;
    let x1 = ((a.x + a.w).min(b.x + b.w)) as f64;
    let y1 = ((a.y + a.h).min(b.y + b.h)) as f64;
    let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
    let union = (a.w * a.h + b.w * b.h) as f64 - inter;
    inter / union
}

pub fn exhaustive_detect(img: &GrayImage, params: &DetectorParams) -> Vec<FaceBox> {
    let (w, h) = (img.width(), img.height());
    let edges = edge_mask(img, params.edge_percentile);
    let mut all = Vec::new();
    for &tw in &params.scales {
        let th = ((tw as f64) * 1.3).round() as usize;
        if tw > w || th > h {
            continue;
        }
        let mut cells = Vec::new();
        for j in 0..th {
            for i in 0..tw {
                if in_annulus(tw, i, j) {
                    cells.push((i, j));
                }
            }
        }
        for y in 0..=h - th {
            for x in 0..=w - tw {
                let hits = cells.iter().filter(|&&(i, j)| edges[y + j][x + i]).count();
                let score = hits as f64 / cells.len() as f64;
                if score >= params.score_threshold {
                    all.push(FaceBox {
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
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.w.cmp(&b.w))
    });
    let mut kept: Vec<FaceBox> = Vec::new();
    for b in all {
        if !kept.iter().any(|k| overlap(k, &b) > params.nms_overlap) {
            kept.push(b);
        }
    }
    kept
}

/// Filled ellipse of value `fg` on a `bg` canvas.
pub fn ellipse_scene(
    w: usize,
    h: usize,
    bg: f64,
    shapes: &[(f64, f64, f64, f64, f64)],
) -> GrayImage {
    let mut px = vec![bg; w * h];
    for &(cx, cy, ew, eh, fg) in shapes {
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 + 0.5 - cx) / (ew / 2.0);
                let v = (y as f64 + 0.5 - cy) / (eh / 2.0);
                if u * u + v * v <= 1.0 {
                    px[y * w + x] = fg;
                }
            }
        }
    }
    GrayImage::new(w, h, px).unwrap()
}

/// Random scene up to `max_side` square: ellipses, rectangles and noise with
/// intensities on a 1/256 grid, so every gradient is computed exactly.
pub fn random_scene<R: Rng>(rng: &mut R, min_side: usize, max_side: usize) -> GrayImage {
    let w = rng.random_range(min_side..=max_side);
    let h = rng.random_range(min_side..=max_side);
    let level = |rng: &mut R| rng.random_range(0..=256u32) as f64 / 256.0;
    let mut px = vec![level(rng); w * h];
    for _ in 0..rng.random_range(0..5) {
        let fg = level(rng);
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let rx = rng.random_range(6.0..w as f64 / 2.0);
        let ry = rx * rng.random_range(1.0..1.6);
        let rect = rng.random_bool(0.3);
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 + 0.5 - cx) / rx;
                let v = (y as f64 + 0.5 - cy) / ry;
                let inside = if rect {
                    u.abs() <= 1.0 && v.abs() <= 1.0
                } else {
                    u * u + v * v <= 1.0
                };
                if inside {
                    px[y * w + x] = fg;
                }
            }
        }
    }
    let noisy = rng.random_range(0..3);
    for p in px.iter_mut() {
        if noisy > 0 && rng.random_bool(0.05 * noisy as f64) {
            *p = level(rng);
        }
    }
    GrayImage::new(w, h, px).unwrap()
}

/// Detector parameters around the defaults.
pub fn random_params<R: Rng>(rng: &mut R) -> DetectorParams {
    if rng.random_bool(0.4) {
        return DetectorParams::default();
    }
    let first = rng.random_range(16..=40);
    let step = rng.random_range(2..=8);
    let count = rng.random_range(1..=8);
    DetectorParams {
        scales: (0..count).map(|i| first + i * step).collect(),
        edge_percentile: rng.random_range(50.0..98.0),
        score_threshold: rng.random_range(0.1..0.6),
        nms_overlap: rng.random_range(0.0..0.8),
    }
}

/// Snaps every sample to the 1/256 grid.
pub fn quantize(img: &GrayImage) -> GrayImage {
    let px = img
        .pixels()
        .iter()
        .map(|v| (v * 256.0).round() / 256.0)
        .collect();
    GrayImage::new(img.width(), img.height(), px).unwrap()
}

//! Seeded synthetic identities.
//!
//! An identity is a parametric face: a skin-toned head ellipse with eyes,
//! brows, a nose bar and a mouth bar, all proportioned from the seed. Each
//! variation re-renders that face with a small translation, a new background,
//! a linear lighting gradient, additive Gaussian noise and optional closed
//! eyes, smile or glasses. Variation `i` of a seed is the same no matter how
//! many variations are requested.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::VisionError;
use crate::image::ImageBuffer;

/// Side of the rendered square canvas.
pub const CANVAS: usize = 128;
pub const MIN_VARIATIONS: usize = 3;
pub const MAX_SHIFT: i32 = 4;
pub const MAX_NOISE_SIGMA: f64 = 0.05;

/// Identity-level face proportions. Lengths are fractions of the head width
/// (`*_w`) or head height (`*_h`) unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    /// Head width in pixels.
    pub head_width: f64,
    pub head_aspect: f64,
    pub skin_tone: f64,
    pub eye_offset_w: f64,
    pub eye_y_h: f64,
    pub eye_rx_w: f64,
    pub eye_ry_h: f64,
    pub eye_tone: f64,
    pub brow_gap_h: f64,
    /// Brow thickness in pixels.
    pub brow_thickness: f64,
    pub brow_tone: f64,
    pub nose_width_w: f64,
    pub nose_length_h: f64,
    pub mouth_y_h: f64,
    pub mouth_half_w: f64,
    pub mouth_thickness_h: f64,
    pub mouth_tone: f64,
    /// Hairline depth below the crown.
    pub hairline_h: f64,
    /// Hairline slope across the face, in pixels per pixel.
    pub hair_tilt: f64,
    pub hair_tone: f64,
}

/// Per-image nuisance factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub dx: i32,
    pub dy: i32,
    pub background: f64,
    pub gradient_angle: f64,
    pub gradient_amplitude: f64,
    pub noise_sigma: f64,
    pub eyes_closed: bool,
    pub smiling: bool,
    pub glasses: bool,
}

struct Draw {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Draw {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    fn shift(&mut self) -> i32 {
        (self.rng.next_u32() % (2 * MAX_SHIFT as u32 + 1)) as i32 - MAX_SHIFT
    }

    /// Standard normal via Box-Muller.
    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(2.0 * PI * u2);
        self.spare = Some(r * s);
        r * c
    }
}

/// Face proportions drawn from `seed`.
pub fn face_geometry(seed: u64) -> FaceGeometry {
    let mut d = Draw::new(seed, 0);
    FaceGeometry {
        head_width: d.range(52.0, 68.0),
        head_aspect: d.range(1.26, 1.34),
        skin_tone: d.range(0.62, 0.9),
        eye_offset_w: d.range(0.14, 0.28),
        eye_y_h: d.range(-0.18, 0.0),
        eye_rx_w: d.range(0.06, 0.13),
        eye_ry_h: d.range(0.03, 0.07),
        eye_tone: d.range(0.0, 0.15),
        brow_gap_h: d.range(0.05, 0.1),
        brow_thickness: d.range(1.5, 4.5),
        brow_tone: d.range(0.0, 0.2),
        nose_width_w: d.range(0.03, 0.1),
        nose_length_h: d.range(0.08, 0.22),
        mouth_y_h: d.range(0.14, 0.32),
        mouth_half_w: d.range(0.08, 0.25),
        mouth_thickness_h: d.range(0.02, 0.07),
        mouth_tone: d.range(0.05, 0.25),
        hairline_h: d.range(0.12, 0.38),
        hair_tilt: d.range(-0.35, 0.35),
        hair_tone: d.range(0.0, 0.2),
    }
}

/// Nuisance factors for variation `index` of `seed`.
pub fn variation(seed: u64, index: usize) -> Variation {
    let mut d = Draw::new(seed, index as u64 + 1);
    Variation {
        dx: d.shift(),
        dy: d.shift(),
        background: d.range(0.32, 0.45),
        gradient_angle: d.range(0.0, 2.0 * PI),
        gradient_amplitude: d.range(-0.2, 0.2),
        noise_sigma: d.range(0.01, 0.03),
        eyes_closed: d.chance(0.2),
        smiling: d.chance(0.4),
        glasses: d.chance(0.3),
    }
}

/// Renders `n_variations` RGB images of the identity drawn from `seed`.
pub fn generate_synthetic_identity(
    seed: u64,
    n_variations: usize,
) -> Result<Vec<ImageBuffer>, VisionError> {
    if n_variations < MIN_VARIATIONS {
        return Err(VisionError::TooFewVariations(n_variations));
    }
    let geometry = face_geometry(seed);
    (0..n_variations)
        .map(|i| {
            let noise = Draw::new(seed, (1 << 32) | i as u64);
            render(&geometry, &variation(seed, i), noise)
        })
        .collect()
}

/// Head box `(x, y, w, h)` of variation `index`, rounded to whole pixels.
pub fn head_box(seed: u64, index: usize) -> (usize, usize, usize, usize) {
    let g = face_geometry(seed);
    let v = variation(seed, index);
    let w = g.head_width;
    let h = w * g.head_aspect;
    let cx = CANVAS as f64 / 2.0 + v.dx as f64;
    let cy = CANVAS as f64 / 2.0 + v.dy as f64;
    (
        libm::round(cx - w / 2.0) as usize,
        libm::round(cy - h / 2.0) as usize,
        libm::round(w) as usize,
        libm::round(h) as usize,
    )
}

fn in_ellipse(px: f64, py: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let u = (px - cx) / rx;
    let v = (py - cy) / ry;
    u * u + v * v <= 1.0
}

fn in_rect(px: f64, py: f64, cx: f64, cy: f64, hw: f64, hh: f64) -> bool {
    (px - cx).abs() <= hw && (py - cy).abs() <= hh
}

fn render(g: &FaceGeometry, v: &Variation, mut noise: Draw) -> Result<ImageBuffer, VisionError> {
    let hw = g.head_width;
    let hh = hw * g.head_aspect;
    let center = CANVAS as f64 / 2.0;
    let cx = center + v.dx as f64;
    let cy = center + v.dy as f64;

    let eye_dx = g.eye_offset_w * hw;
    let eye_y = cy + g.eye_y_h * hh;
    let eye_rx = g.eye_rx_w * hw;
    let eye_ry = g.eye_ry_h * hh * if v.eyes_closed { 0.4 } else { 1.0 };
    let brow_y = eye_y - g.eye_ry_h * hh - g.brow_gap_h * hh;
    let nose_top = eye_y + 0.5 * g.eye_ry_h * hh;
    let nose_hh = g.nose_length_h * hh / 2.0;
    let mouth_y = cy + g.mouth_y_h * hh;
    let mouth_hh = g.mouth_thickness_h * hh / 2.0 * if v.smiling { 1.7 } else { 1.0 };
    let (glass_hw, glass_hh) = (eye_rx + 3.0, g.eye_ry_h * hh + 3.0);
    let frame = 0.75 * g.skin_tone;
    let (gcos, gsin) = (libm::cos(v.gradient_angle), libm::sin(v.gradient_angle));

    let mut pixels = Vec::with_capacity(CANVAS * CANVAS * 3);
    for y in 0..CANVAS {
        let py = y as f64 + 0.5;
        for x in 0..CANVAS {
            let px = x as f64 + 0.5;
            let mut tint = [1.0, 1.0, 1.1];
            let mut value = v.background;
            if in_ellipse(px, py, cx, cy, hw / 2.0, hh / 2.0) {
                tint = [1.0, 0.85, 0.7];
                value = g.skin_tone;
                if py < cy - hh / 2.0 + g.hairline_h * hh + g.hair_tilt * (px - cx) {
                    value = g.hair_tone;
                }
                for side in [-1.0, 1.0] {
                    let ex = cx + side * eye_dx;
                    if in_rect(px, py, ex, brow_y, 1.2 * eye_rx, g.brow_thickness / 2.0) {
                        value = g.brow_tone;
                    }
                    if in_ellipse(px, py, ex, eye_y, eye_rx, eye_ry) {
                        value = g.eye_tone;
                    }
                    if v.glasses
                        && in_rect(px, py, ex, eye_y, glass_hw, glass_hh)
                        && !in_rect(px, py, ex, eye_y, glass_hw - 1.0, glass_hh - 1.0)
                    {
                        value = frame;
                    }
                }
                if v.glasses && in_rect(px, py, cx, eye_y, eye_dx - glass_hw, 0.6) {
                    value = frame;
                }
                if in_rect(
                    px,
                    py,
                    cx,
                    nose_top + nose_hh,
                    g.nose_width_w * hw / 2.0,
                    nose_hh,
                ) {
                    value = g.skin_tone * 0.75;
                }
                if in_rect(px, py, cx, mouth_y, g.mouth_half_w * hw, mouth_hh) {
                    value = g.mouth_tone;
                }
            }
            let light =
                v.gradient_amplitude * ((px - center) * gcos + (py - center) * gsin) / center;
            for t in tint {
                let s = (value * t + light + v.noise_sigma * noise.normal()).clamp(0.0, 1.0);
                pixels.push(libm::round(s * 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(CANVAS, CANVAS, 3, pixels)
}

//! Luma conversion, histogram equalization and bilinear resampling.

use alloc::vec::Vec;

use crate::error::VisionError;
use crate::image::{GrayImage, ImageBuffer};

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const BINS: usize = 256;

/// Converts to a float gray image without equalization.
pub fn luma(image: &ImageBuffer) -> GrayImage {
    let pixels = match image.channels() {
        1 => image.pixels().iter().map(|&p| p as f64 / 255.0).collect(),
        _ => image
            .pixels()
            .chunks_exact(3)
            .map(|rgb| {
                let y = LUMA_WEIGHTS[0] * rgb[0] as f64
                    + LUMA_WEIGHTS[1] * rgb[1] as f64
                    + LUMA_WEIGHTS[2] * rgb[2] as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect(),
    };
    GrayImage::from_raw(image.width(), image.height(), pixels)
}

#[inline]
fn bin_of(v: f64) -> usize {
    (libm::round(v * 255.0) as usize).min(BINS - 1)
}

/// Maps each sample to the cumulative fraction of samples in its bin or below.
///
/// An image whose samples all fall into one bin maps to that bin's normalized
/// value instead (the cdf would otherwise send everything to 1).
pub fn equalize(image: &GrayImage) -> GrayImage {
    let mut hist = [0usize; BINS];
    for &v in image.pixels() {
        hist[bin_of(v)] += 1;
    }
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    let n = image.pixels().len() as f64;
    let mut lut = [0.0f64; BINS];
    if occupied <= 1 {
        for (b, slot) in lut.iter_mut().enumerate() {
            *slot = b as f64 / 255.0;
        }
    } else {
        let mut running = 0usize;
        for (b, slot) in lut.iter_mut().enumerate() {
            running += hist[b];
            *slot = running as f64 / n;
        }
    }
    let pixels = image.pixels().iter().map(|&v| lut[bin_of(v)]).collect();
    GrayImage::from_raw(image.width(), image.height(), pixels)
}

/// Luma conversion followed by 256-bin histogram equalization.
pub fn preprocess(image: &ImageBuffer) -> GrayImage {
    equalize(&luma(image))
}

/// Bilinear interpolation at fractional coordinates, clamped to the image.
pub fn sample_bilinear(image: &GrayImage, fx: f64, fy: f64) -> f64 {
    let max_x = (image.width() - 1) as f64;
    let max_y = (image.height() - 1) as f64;
    let fx = fx.clamp(0.0, max_x);
    let fy = fy.clamp(0.0, max_y);
    let x0 = libm::floor(fx) as usize;
    let y0 = libm::floor(fy) as usize;
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let top = image.get(x0, y0) * (1.0 - tx) + image.get(x1, y0) * tx;
    let bottom = image.get(x0, y1) * (1.0 - tx) + image.get(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Resamples the `w`x`h` region at (`x`, `y`) onto an `out_w`x`out_h` grid.
///
/// Output pixel centers map onto region pixel centers; sample positions are
/// clamped to the region so nothing outside it contributes.
pub fn resample_region(
    image: &GrayImage,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    out_w: usize,
    out_h: usize,
) -> Result<Vec<f64>, VisionError> {
    if w == 0
        || h == 0
        || out_w == 0
        || out_h == 0
        || x.checked_add(w).is_none_or(|r| r > image.width())
        || y.checked_add(h).is_none_or(|b| b > image.height())
    {
        return Err(VisionError::BoxOutOfBounds);
    }
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let ry = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        for ox in 0..out_w {
            let rx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            out.push(sample_bilinear(image, x as f64 + rx, y as f64 + ry));
        }
    }
    Ok(out)
}

/// Bilinear resize of a whole image.
pub fn resize_bilinear(
    image: &GrayImage,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage, VisionError> {
    let pixels = resample_region(image, 0, 0, image.width(), image.height(), out_w, out_h)?;
    Ok(GrayImage::from_raw(out_w, out_h, pixels))
}

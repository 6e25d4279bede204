//! Sobel gradient magnitude and percentile-thresholded binary edge maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::VisionError;
use crate::image::GrayImage;

/// Sobel gradient magnitude. Border pixels have no full neighbourhood and are 0.
pub fn sobel_magnitude(image: &GrayImage) -> Result<Vec<f64>, VisionError> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(VisionError::ImageTooSmall {
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let p = image.pixels();
    let mut out = vec![0.0; w * h];
    for y in 1..h - 1 {
        let up = &p[(y - 1) * w..y * w];
        let mid = &p[y * w..(y + 1) * w];
        let down = &p[(y + 1) * w..(y + 2) * w];
        for x in 1..w - 1 {
            let gx = (up[x + 1] + 2.0 * mid[x + 1] + down[x + 1])
                - (up[x - 1] + 2.0 * mid[x - 1] + down[x - 1]);
            let gy =
                (down[x - 1] + 2.0 * down[x] + down[x + 1]) - (up[x - 1] + 2.0 * up[x] + up[x + 1]);
            out[y * w + x] = libm::sqrt(gx * gx + gy * gy);
        }
    }
    Ok(out)
}

/// Binary edge map: a pixel is an edge when the empirical distribution of the
/// nonzero gradient magnitudes, evaluated at its own magnitude, exceeds
/// `percentile / 100`.
///
/// Equivalently, with the nonzero magnitudes sorted ascending as `s[0..n]`,
/// edges are the pixels whose magnitude is at least `s[floor(p * n / 100)]`.
/// Percentile 100 therefore yields no edges, and percentile 0 keeps every
/// nonzero magnitude.
pub fn edge_map(image: &GrayImage, percentile: f64) -> Result<GrayImage, VisionError> {
    let bits = edge_bits(image, percentile)?;
    let pixels = bits
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect();
    Ok(GrayImage::from_raw(image.width(), image.height(), pixels))
}

pub(crate) fn edge_bits(image: &GrayImage, percentile: f64) -> Result<Vec<bool>, VisionError> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(VisionError::InvalidParams(
            "edge percentile must lie in [0, 100]",
        ));
    }
    let mag = sobel_magnitude(image)?;
    let mut nonzero: Vec<f64> = mag.iter().copied().filter(|&m| m > 0.0).collect();
    let n = nonzero.len();
    let rank = libm::floor(percentile * n as f64 / 100.0) as usize;
    if rank >= n {
        return Ok(vec![false; mag.len()]);
    }
    let (_, threshold, _) = nonzero.select_nth_unstable_by(rank, f64::total_cmp);
    let threshold = *threshold;
    Ok(mag.iter().map(|&m| m > 0.0 && m >= threshold).collect())
}

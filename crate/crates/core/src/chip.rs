//! Canonical face chips.

use alloc::vec::Vec;

use crate::detect::FaceBox;
use crate::error::VisionError;
use crate::image::GrayImage;
use crate::preprocess::resample_region;

pub const CHIP_SIDE: usize = 64;
pub const CHIP_LEN: usize = CHIP_SIDE * CHIP_SIDE;

/// A 64x64 face crop in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceChip {
    pixels: Vec<f64>,
    standardized: bool,
}

impl FaceChip {
    pub fn new(pixels: Vec<f64>) -> Result<Self, VisionError> {
        if pixels.len() != CHIP_LEN {
            return Err(VisionError::InvalidDimensions);
        }
        Ok(Self {
            pixels,
            standardized: false,
        })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Zero-mean, unit-norm copy. A flat chip stays all zeros.
    pub fn standardized(&self) -> Self {
        let mean = self.pixels.iter().sum::<f64>() / CHIP_LEN as f64;
        let mut centered: Vec<f64> = self.pixels.iter().map(|v| v - mean).collect();
        let norm = libm::sqrt(centered.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            centered.iter_mut().for_each(|v| *v /= norm);
        }
        Self {
            pixels: centered,
            standardized: true,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(
            CHIP_SIDE,
            CHIP_SIDE,
            self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }
}

impl AsRef<[f64]> for FaceChip {
    fn as_ref(&self) -> &[f64] {
        &self.pixels
    }
}

/// Bilinear resample of `face` to a 64x64 chip.
pub fn crop_normalize(image: &GrayImage, face: &FaceBox) -> Result<FaceChip, VisionError> {
    let pixels = resample_region(image, face.x, face.y, face.w, face.h, CHIP_SIDE, CHIP_SIDE)?;
    FaceChip::new(pixels)
}

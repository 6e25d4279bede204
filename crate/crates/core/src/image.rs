//! Raster containers and the binary netpbm codec (P5/P6, maxval 255).
//!
//! Compressed formats are not decoded here. Callers that accept JPEG pass an
//! [`ImageDecoder`] to [`decode_image_with`]; without one such input is
//! reported as [`VisionError::UnsupportedFormat`].

use alloc::format;
use alloc::vec::Vec;

use crate::error::VisionError;

/// 8-bit raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: u8,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: u8,
        pixels: Vec<u8>,
    ) -> Result<Self, VisionError> {
        if width == 0 || height == 0 || !matches!(channels, 1 | 3) {
            return Err(VisionError::InvalidDimensions);
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels as usize))
            .ok_or(VisionError::InvalidDimensions)?;
        if pixels.len() != expected {
            return Err(VisionError::InvalidDimensions);
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Single-channel float image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, VisionError> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(VisionError::InvalidDimensions);
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VisionError::InvalidParams(
                "gray samples must lie in [0, 1]",
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from samples already known to be in range.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, VisionError> {
        Self::new(width, height, alloc::vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Quantizes back to an 8-bit single-channel buffer.
    pub fn to_buffer(&self) -> ImageBuffer {
        let pixels = self
            .pixels
            .iter()
            .map(|v| libm::round(v * 255.0) as u8)
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }
}

/// Caller's guess at the container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatHint {
    #[default]
    Auto,
    Pgm,
    Ppm,
    Jpeg,
}

/// Decoder for formats this crate does not implement itself.
pub trait ImageDecoder {
    fn decode(&self, bytes: &[u8]) -> Result<ImageBuffer, VisionError>;
}

/// Decodes PGM/PPM bytes. JPEG input yields `UnsupportedFormat`.
pub fn decode_image(bytes: &[u8], hint: FormatHint) -> Result<ImageBuffer, VisionError> {
    decode_image_with(bytes, hint, None)
}

/// Decodes PGM/PPM natively and delegates JPEG to `jpeg` when provided.
pub fn decode_image_with(
    bytes: &[u8],
    hint: FormatHint,
    jpeg: Option<&dyn ImageDecoder>,
) -> Result<ImageBuffer, VisionError> {
    if bytes.is_empty() {
        return Err(VisionError::MalformedHeader("empty input"));
    }
    let sniffed = sniff(bytes);
    let format = match hint {
        FormatHint::Auto => sniffed.ok_or(VisionError::UnsupportedFormat)?,
        explicit => {
            if let Some(found) = sniffed {
                if found != explicit {
                    return Err(VisionError::MalformedHeader(
                        "magic does not match format hint",
                    ));
                }
            }
            explicit
        }
    };
    match format {
        FormatHint::Pgm => parse_pnm(bytes, 1),
        FormatHint::Ppm => parse_pnm(bytes, 3),
        FormatHint::Jpeg => match jpeg {
            Some(decoder) => decoder.decode(bytes),
            None => Err(VisionError::UnsupportedFormat),
        },
        FormatHint::Auto => unreachable!(),
    }
}

fn sniff(bytes: &[u8]) -> Option<FormatHint> {
    match bytes {
        [b'P', b'5', ..] => Some(FormatHint::Pgm),
        [b'P', b'6', ..] => Some(FormatHint::Ppm),
        [0xFF, 0xD8, ..] => Some(FormatHint::Jpeg),
        _ => None,
    }
}

fn parse_pnm(bytes: &[u8], channels: u8) -> Result<ImageBuffer, VisionError> {
    let magic: &[u8] = if channels == 1 { b"P5" } else { b"P6" };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(VisionError::MalformedHeader("bad magic"));
    }
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    let width = cursor.field()?;
    let height = cursor.field()?;
    let maxval = cursor.field()?;
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        Some(_) => {
            return Err(VisionError::MalformedHeader(
                "missing separator after maxval",
            ))
        }
        None => {
            return Err(VisionError::TruncatedPayload {
                expected: 1,
                actual: 0,
            })
        }
    }
    if width == 0 || height == 0 {
        return Err(VisionError::MalformedHeader("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(VisionError::MalformedHeader("maxval out of range"));
    }
    if maxval != 255 {
        return Err(VisionError::UnsupportedFormat);
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels as usize))
        .ok_or(VisionError::MalformedHeader("dimensions overflow"))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(VisionError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    Ok(ImageBuffer {
        width,
        height,
        channels,
        pixels: payload[..expected].to_vec(),
    })
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    /// Skips at least one whitespace byte (and any `#` comments), then reads
    /// a decimal field.
    fn field(&mut self) -> Result<usize, VisionError> {
        let start = self.pos;
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if self.pos == start {
            return Err(VisionError::MalformedHeader(
                "missing whitespace before field",
            ));
        }
        let digits_start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or(VisionError::MalformedHeader("numeric field overflow"))?;
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(if self.pos >= self.bytes.len() {
                VisionError::MalformedHeader("header ends early")
            } else {
                VisionError::MalformedHeader("expected a decimal field")
            });
        }
        Ok(value)
    }
}

/// Encodes as binary PGM (1 channel) or PPM (3 channels) with maxval 255.
pub fn encode_pnm(image: &ImageBuffer) -> Vec<u8> {
    let magic = if image.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.pixels);
    out
}

//! Photo bytes to embedding: decode, preprocess, detect, crop, embed.

use mfr_core::image::{decode_image_with, ImageDecoder};
use mfr_core::preprocess::resize_bilinear;
use mfr_core::{
    crop_normalize, detect_faces, preprocess, DetectorParams, EigenModel, Embedding, FaceBox,
    FaceChip, FormatHint, Gallery, GrayImage, ImageBuffer, MatchResult, RecognitionError,
    VisionError,
};
use thiserror::Error;
use zune_core::bytestream::ZCursor;
use zune_core::colorspace::ColorSpace;
use zune_core::options::DecoderOptions;
use zune_jpeg::JpegDecoder as ZuneDecoder;

/// Photos are downscaled so their longer side is at most this before detection.
pub const MAX_DETECT_SIDE: usize = 160;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad image: {0}")]
    BadImage(VisionError),
    #[error("no face detected")]
    NoFaceDetected,
    #[error(transparent)]
    Recognition(#[from] RecognitionError),
}

/// JPEG support for [`decode_image_with`], always producing RGB.
pub struct JpegDecoder;

impl ImageDecoder for JpegDecoder {
    fn decode(&self, bytes: &[u8]) -> Result<ImageBuffer, VisionError> {
        let options = DecoderOptions::default().jpeg_set_out_colorspace(ColorSpace::RGB);
        let mut dec = ZuneDecoder::new_with_options(ZCursor::new(bytes), options);
        let pixels = dec
            .decode()
            .map_err(|_| VisionError::MalformedHeader("undecodable JPEG data"))?;
        let info = dec
            .info()
            .ok_or(VisionError::MalformedHeader("JPEG without frame header"))?;
        ImageBuffer::new(info.width as usize, info.height as usize, 3, pixels)
    }
}

/// Decodes PGM, PPM or JPEG bytes.
pub fn decode_photo(bytes: &[u8]) -> Result<ImageBuffer, VisionError> {
    decode_image_with(bytes, FormatHint::Auto, Some(&JpegDecoder))
}

/// A face located in a photo, in original pixel coordinates.
#[derive(Debug, Clone)]
pub struct LocatedFace {
    pub face: FaceBox,
    pub chip: FaceChip,
}

/// Runs detection and returns the largest face (ties: better score, then
/// detection order) as a chip.
pub fn extract_face(
    image: &ImageBuffer,
    params: &DetectorParams,
) -> Result<LocatedFace, PipelineError> {
    let gray = preprocess(image);
    let (work, scale) = downscaled(&gray).map_err(PipelineError::BadImage)?;
    let boxes = detect_faces(&work, params).map_err(PipelineError::BadImage)?;
    let best = boxes
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.area()
                .cmp(&b.area())
                .then(a.score.total_cmp(&b.score))
                .then(ib.cmp(ia))
        })
        .map(|(_, b)| *b)
        .ok_or(PipelineError::NoFaceDetected)?;
    let chip = crop_normalize(&work, &best).map_err(PipelineError::BadImage)?;
    let face = if scale == 1.0 {
        best
    } else {
        let up = |v: usize| ((v as f64) * scale).round() as usize;
        FaceBox {
            x: up(best.x),
            y: up(best.y),
            w: up(best.w).min(gray.width() - up(best.x).min(gray.width())),
            h: up(best.h).min(gray.height() - up(best.y).min(gray.height())),
            score: best.score,
        }
    };
    Ok(LocatedFace { face, chip })
}

fn downscaled(gray: &GrayImage) -> Result<(GrayImage, f64), VisionError> {
    let side = gray.width().max(gray.height());
    if side <= MAX_DETECT_SIDE {
        return Ok((gray.clone(), 1.0));
    }
    let scale = side as f64 / MAX_DETECT_SIDE as f64;
    let w = ((gray.width() as f64 / scale).round() as usize).max(1);
    let h = ((gray.height() as f64 / scale).round() as usize).max(1);
    Ok((resize_bilinear(gray, w, h)?, scale))
}

/// Decodes and embeds a photo.
pub fn embed_photo(
    bytes: &[u8],
    model: &EigenModel,
    params: &DetectorParams,
) -> Result<(Embedding, FaceBox), PipelineError> {
    let image = decode_photo(bytes).map_err(PipelineError::BadImage)?;
    let found = extract_face(&image, params)?;
    Ok((model.embed(found.chip.pixels())?, found.face))
}

/// The published model, gallery and detector settings used for identification.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub model: EigenModel,
    pub gallery: Gallery,
    pub params: DetectorParams,
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub matches: Vec<MatchResult>,
    pub face: FaceBox,
}

impl Recognizer {
    pub fn new(model: EigenModel, params: DetectorParams) -> Self {
        let gallery = Gallery::new(model.version());
        Self {
            model,
            gallery,
            params,
        }
    }

    pub fn embed(&self, bytes: &[u8]) -> Result<(Embedding, FaceBox), PipelineError> {
        embed_photo(bytes, &self.model, &self.params)
    }

    pub fn identify(
        &self,
        bytes: &[u8],
        top_n: usize,
        threshold: f64,
    ) -> Result<Identification, PipelineError> {
        let image = decode_photo(bytes).map_err(PipelineError::BadImage)?;
        self.identify_image(&image, top_n, threshold)
    }

    pub fn identify_image(
        &self,
        image: &ImageBuffer,
        top_n: usize,
        threshold: f64,
    ) -> Result<Identification, PipelineError> {
        let found = extract_face(image, &self.params)?;
        if self.gallery.is_empty() {
            return Err(RecognitionError::EmptyGallery.into());
        }
        let probe = self.model.embed(found.chip.pixels())?;
        let matches = self.gallery.identify(&probe, top_n, threshold)?;
        Ok(Identification {
            matches,
            face: found.face,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfr_core::generate_synthetic_identity;
    use mfr_core::image::encode_pnm;

    #[test]
    fn blank_photo_has_no_face() {
        let blank = ImageBuffer::new(96, 96, 1, vec![200; 96 * 96]).unwrap();
        let err = extract_face(&blank, &DetectorParams::default()).unwrap_err();
        assert!(matches!(err, PipelineError::NoFaceDetected));
    }

    #[test]
    fn generated_face_is_found() {
        let img = &generate_synthetic_identity(3, 3).unwrap()[0];
        let bytes = encode_pnm(img);
        let found =
            extract_face(&decode_photo(&bytes).unwrap(), &DetectorParams::default()).unwrap();
        let (x, y, w, h) = mfr_core::synth::head_box(3, 0);
        let truth = FaceBox {
            x,
            y,
            w,
            h,
            score: 1.0,
        };
        assert!(mfr_core::detect::iou(&found.face, &truth) > 0.7);
    }

    #[test]
    fn large_photo_box_maps_back() {
        // 320 px photos are worked on at 160 px, i.e. 1.25x the generator
        // scale; pick a head that stays inside the detector's scale range.
        let seed = (0..)
            .find(|&s| (mfr_core::synth::head_box(s, 1).2 as f64) * 1.25 <= 80.0)
            .unwrap();
        let img = &generate_synthetic_identity(seed, 3).unwrap()[1];
        let gray = preprocess(img);
        let big = resize_bilinear(&gray, 320, 320).unwrap().to_buffer();
        let found = extract_face(&big, &DetectorParams::default()).unwrap();
        let (x, y, w, h) = mfr_core::synth::head_box(seed, 1);
        let s = |v: usize| (v as f64 * 2.5).round() as usize;
        let truth = FaceBox {
            x: s(x),
            y: s(y),
            w: s(w),
            h: s(h),
            score: 1.0,
        };
        assert!(found.face.fits(320, 320));
        assert!(mfr_core::detect::iou(&found.face, &truth) > 0.6);
    }

    #[test]
    fn garbage_is_bad_image() {
        assert!(matches!(
            decode_photo(b"hello"),
            Err(VisionError::UnsupportedFormat)
        ));
        assert!(decode_photo(&[0xFF, 0xD8, 0xFF, 0x00, 0x01]).is_err());
    }
}

//! Allocation-only building blocks for a missing-and-found recognition service.
//!
//! Everything here is a pure function of its inputs and builds without `std`:
//!
//! - [`image`]: PGM/PPM decoding and encoding, plus a pluggable decoder hook
//!   for compressed formats.
//! - [`preprocess`] and [`edges`]: luma conversion, histogram equalization,
//!   bilinear sampling and thresholded Sobel edge maps.
//! - [`detect`]: head-outline template matching with greedy non-maximum
//!   suppression.
//! - [`chip`]: canonical 64x64 face chips.
//! - [`synth`]: seeded synthetic identities used as a stand-in face corpus.
//! - [`eigen`], [`gallery`] and [`calibrate`]: eigenface training,
//!   embedding, gallery identification and threshold calibration.
//! - [`search`]: tokenizer, query grammar and positional inverted index.
//! - [`lifecycle`]: status graphs for item reports, person reports and claims.
//!
//! Values are immutable once built and can be shared freely across threads.

#![no_std]

extern crate alloc;

pub mod calibrate;
pub mod chip;
pub mod detect;
pub mod edges;
pub mod eigen;
pub mod gallery;
pub mod image;
pub mod lifecycle;
pub mod linalg;
pub mod preprocess;
pub mod search;
pub mod synth;

mod error;

pub use chip::{crop_normalize, FaceChip, CHIP_SIDE};
pub use detect::{detect_faces, DetectorParams, FaceBox};
pub use edges::edge_map;
pub use eigen::{train_eigenmodel, EigenModel};
pub use error::{RecognitionError, VisionError};
pub use gallery::{distance, Embedding, Gallery, MatchResult};
pub use image::{decode_image, FormatHint, GrayImage, ImageBuffer};
pub use preprocess::preprocess;
pub use synth::generate_synthetic_identity;

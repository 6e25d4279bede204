use thiserror::Error;

/// Failures from decoding, preprocessing and detection.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VisionError {
    #[error("malformed image header: {0}")]
    MalformedHeader(&'static str),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("image {width}x{height} is smaller than the required {min_width}x{min_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("face box is not fully inside the image")]
    BoxOutOfBounds,
    #[error("at least 3 variations are required, got {0}")]
    TooFewVariations(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("pixel buffer does not match the stated dimensions")]
    InvalidDimensions,
}

/// Failures from eigenmodel training and gallery operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecognitionError {
    #[error("at least 2 training samples are required, got {0}")]
    TooFewChips(usize),
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("sample dimensions disagree: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("model version mismatch: expected {expected}, got {actual}")]
    ModelVersionMismatch { expected: u64, actual: u64 },
    #[error("at least 3 face chips are required per person, got {0}")]
    InsufficientGallery(usize),
    #[error("person {0:?} is already enrolled")]
    DuplicatePerson(alloc::string::String),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("model has no usable components")]
    DegenerateModel,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("eigensolver did not converge within {0} sweeps")]
    NotConverged(usize),
}

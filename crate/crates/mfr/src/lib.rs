//! Storage, service and client layers for the missing-and-found recognition
//! system, on top of the algorithms in `mfr_core`.

pub mod blobs;
pub mod codec;
pub mod dataset;
pub mod model_file;
pub mod outbox;
pub mod pipeline;
pub mod registry;
pub mod replay;
pub mod service;
pub mod sync;

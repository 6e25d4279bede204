//! Length-prefixed, CRC-32C checksummed records with canonical JSON payloads.
//!
//! Frame layout: `u32` payload length (LE), `u32` CRC-32C of the payload (LE),
//! payload bytes. Shared by the registry log, snapshots and kiosk outboxes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const HEADER_LEN: usize = 8;
/// Frames claiming more than this are treated as corruption, not a torn write.
pub const MAX_RECORD_LEN: usize = 64 << 20;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("checksum mismatch in record at byte offset {offset}")]
    Corrupt { offset: u64 },
    #[error("record at byte offset {offset} is not valid JSON: {source}")]
    Payload {
        offset: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error("record exceeds {MAX_RECORD_LEN} bytes")]
    TooLarge,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Serializes `value` as JSON with object keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    // serde_json's Value map is a BTreeMap without `preserve_order`.
    let v = serde_json::to_value(value)?;
    serde_json::to_vec(&v)
}

pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>, CodecError> {
    if payload.len() > MAX_RECORD_LEN {
        return Err(CodecError::TooLarge);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32c::crc32c(payload).to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn encode_record<T: Serialize>(value: &T) -> Result<Vec<u8>, CodecError> {
    encode_frame(&canonical_json(value)?)
}

/// How a scan ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanEnd {
    /// Every byte belongs to a valid frame.
    Clean,
    /// The final frame is incomplete, as left by an interrupted append.
    TornTail { offset: u64 },
    /// A complete frame fails its checksum (or claims an absurd length).
    Corrupt { offset: u64 },
}

#[derive(Debug)]
pub struct Scan<'a> {
    /// `(offset, payload)` of every valid frame before the first problem.
    pub frames: Vec<(u64, &'a [u8])>,
    /// Byte length of the valid prefix.
    pub valid_len: u64,
    pub end: ScanEnd,
}

pub fn scan_frames(bytes: &[u8]) -> Scan<'_> {
    let mut frames = Vec::new();
    let mut pos = 0usize;
    let end = loop {
        let rest = &bytes[pos..];
        if rest.is_empty() {
            break ScanEnd::Clean;
        }
        if rest.len() < HEADER_LEN {
            break ScanEnd::TornTail { offset: pos as u64 };
        }
        let len = u32::from_le_bytes(rest[0..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(rest[4..8].try_into().unwrap());
        if len > MAX_RECORD_LEN {
            break ScanEnd::Corrupt { offset: pos as u64 };
        }
        if rest.len() < HEADER_LEN + len {
            break ScanEnd::TornTail { offset: pos as u64 };
        }
        let payload = &rest[HEADER_LEN..HEADER_LEN + len];
        if crc32c::crc32c(payload) != crc {
            break ScanEnd::Corrupt { offset: pos as u64 };
        }
        frames.push((pos as u64, payload));
        pos += HEADER_LEN + len;
    };
    Scan {
        frames,
        valid_len: pos as u64,
        end,
    }
}

pub fn decode_payload<T: DeserializeOwned>(offset: u64, payload: &[u8]) -> Result<T, CodecError> {
    serde_json::from_slice(payload).map_err(|source| CodecError::Payload { offset, source })
}

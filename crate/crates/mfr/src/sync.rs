//! Kiosk-to-server batch format, shared by the outbox client and the service.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::codec::canonical_json;
use crate::registry::{ItemDraft, PersonDraft};

/// Largest number of reports in one batch.
pub const MAX_BATCH_REPORTS: usize = 100;

/// A report as queued by a kiosk. Photos travel inline as base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum ReportPayload {
    Item {
        draft: ItemDraft,
        #[serde(default)]
        photo: Option<String>,
    },
    Person {
        draft: PersonDraft,
        #[serde(default)]
        photo: Option<String>,
    },
}

impl ReportPayload {
    pub fn item(draft: ItemDraft, photo: Option<&[u8]>) -> Self {
        Self::Item {
            draft,
            photo: photo.map(|p| B64.encode(p)),
        }
    }

    pub fn person(draft: PersonDraft, photo: Option<&[u8]>) -> Self {
        Self::Person {
            draft,
            photo: photo.map(|p| B64.encode(p)),
        }
    }

    fn photo_field(&self) -> Option<&str> {
        match self {
            Self::Item { photo, .. } | Self::Person { photo, .. } => photo.as_deref(),
        }
    }

    pub fn photo_bytes(&self) -> Result<Option<Vec<u8>>, String> {
        self.photo_field()
            .map(|p| {
                B64.decode(p)
                    .map_err(|e| format!("photo is not valid base64: {e}"))
            })
            .transpose()
    }

    /// The same checks the server applies, minus those needing its state.
    pub fn validate(&self) -> Result<(), String> {
        let photo = self.photo_bytes()?;
        let has_photo = photo.as_ref().is_some_and(|p| !p.is_empty());
        match self {
            Self::Item { draft, .. } => draft.validate(has_photo),
            Self::Person { draft, .. } => draft.validate(has_photo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub seq: u64,
    pub report: ReportPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub kiosk_id: String,
    pub reports: Vec<BatchEntry>,
    /// Lowercase hex CRC-32C of the canonical JSON of `reports`.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncAck {
    pub kiosk_id: String,
    pub high_water_seq: u64,
    pub accepted: u64,
    pub duplicates: u64,
}

pub fn batch_checksum(reports: &[BatchEntry]) -> String {
    let bytes = canonical_json(&reports).expect("batch entries serialize");
    format!("{:08x}", crc32c::crc32c(&bytes))
}

impl SyncBatch {
    pub fn new(kiosk_id: impl Into<String>, reports: Vec<BatchEntry>) -> Self {
        let checksum = batch_checksum(&reports);
        Self {
            kiosk_id: kiosk_id.into(),
            reports,
            checksum,
        }
    }

    pub fn checksum_ok(&self) -> bool {
        batch_checksum(&self.reports) == self.checksum.to_ascii_lowercase()
    }

    pub fn seqs_ascending(&self) -> bool {
        self.reports.first().is_none_or(|e| e.seq >= 1)
            && self.reports.windows(2).all(|w| w[0].seq < w[1].seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{Category, ItemKind};

    fn entry(seq: u64) -> BatchEntry {
        BatchEntry {
            seq,
            report: ReportPayload::item(
                ItemDraft {
                    kind: ItemKind::Found,
                    category: Category::Phone,
                    description: format!("phone {seq}"),
                    location: "Gate 1".into(),
                    claimed_time: None,
                },
                None,
            ),
        }
    }

    #[test]
    fn checksum_detects_tampering() {
        let mut b = SyncBatch::new("k1", vec![entry(1), entry(2)]);
        assert!(b.checksum_ok());
        b.reports[1].seq = 3;
        assert!(!b.checksum_ok());
    }

    #[test]
    fn ascending_rule() {
        assert!(SyncBatch::new("k", vec![]).seqs_ascending());
        assert!(SyncBatch::new("k", vec![entry(1), entry(5)]).seqs_ascending());
        assert!(!SyncBatch::new("k", vec![entry(2), entry(2)]).seqs_ascending());
        assert!(!SyncBatch::new("k", vec![entry(0)]).seqs_ascending());
    }

    #[test]
    fn payload_validation_and_photo_round_trip() {
        let p = ReportPayload::item(
            ItemDraft {
                kind: ItemKind::Lost,
                category: Category::Bag,
                description: String::new(),
                location: String::new(),
                claimed_time: None,
            },
            Some(b"P5 1 1 255 x"),
        );
        assert!(p.validate().is_ok());
        assert_eq!(p.photo_bytes().unwrap().unwrap(), b"P5 1 1 255 x");
        let ReportPayload::Item { draft, .. } = p else {
            unreachable!()
        };
        assert!(ReportPayload::item(draft, None).validate().is_err());
    }
}

//! Outbox replay: batches unsent entries to the server and marks them sent
//! once acknowledged. Delivery is at-least-once; the server drops repeats by
//! `(kiosk_id, seq)`, so the combined effect is exactly-once.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outbox::{Outbox, OutboxError};
use crate::sync::{BatchEntry, SyncAck, SyncBatch, MAX_BATCH_REPORTS};

/// Encoded entries per batch stay under this, leaving headroom below the
/// server's body limit.
pub const MAX_BATCH_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("server rejected the batch ({code}): {message}")]
    Rejected {
        status: u16,
        code: String,
        message: String,
    },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        matches!(self, Self::Unreachable(_) | Self::Server { .. })
    }
}

pub trait Transport {
    fn send(&mut self, batch: &SyncBatch) -> Result<SyncAck, TransportError>;
}

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("server unreachable after {attempts} attempts: {last}")]
    ServerUnreachable { attempts: u32, last: TransportError },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error(transparent)]
    Transport(TransportError),
    #[error("server acknowledged high water {got}, expected at least {want}")]
    ShortAck { got: u64, want: u64 },
    #[error(transparent)]
    Outbox(#[from] OutboxError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSummary {
    /// Reports the server accepted as new.
    pub sent: u64,
    /// Reports the server already had.
    pub duplicates: u64,
    pub high_water: u64,
}

pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub sleep: Box<dyn FnMut(Duration)>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 5,
            base_delay: Duration::from_millis(250),
            sleep: Box::new(std::thread::sleep),
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts.
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
            sleep: Box::new(|_| {}),
        }
    }

    fn send(&mut self, t: &mut dyn Transport, batch: &SyncBatch) -> Result<SyncAck, SyncError> {
        let attempts = self.attempts.max(1);
        let mut delay = self.base_delay;
        for attempt in 1..=attempts {
            match t.send(batch) {
                Ok(ack) => return Ok(ack),
                Err(TransportError::Auth(m)) => return Err(SyncError::AuthFailure(m)),
                Err(e) if e.retryable() => {
                    tracing::warn!(attempt, error = %e, "batch not delivered");
                    if attempt == attempts {
                        return Err(SyncError::ServerUnreachable { attempts, last: e });
                    }
                    (self.sleep)(delay);
                    delay *= 2;
                }
                Err(e) => return Err(SyncError::Transport(e)),
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

/// Splits pending entries into batches by count and encoded size. A single
/// oversized entry still forms its own batch.
pub fn plan_batches(pending: &[BatchEntry]) -> Vec<&[BatchEntry]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut bytes = 0;
    for (i, e) in pending.iter().enumerate() {
        let size = serde_json::to_vec(e).map_or(0, |v| v.len());
        if i > start && (i - start == MAX_BATCH_REPORTS || bytes + size > MAX_BATCH_BYTES) {
            out.push(&pending[start..i]);
            start = i;
            bytes = 0;
        }
        bytes += size;
    }
    if start < pending.len() {
        out.push(&pending[start..]);
    }
    out
}

/// Sends every unsent entry in seq order. Safe to interrupt and rerun.
pub fn sync_replay(
    outbox: &mut Outbox,
    transport: &mut dyn Transport,
    retry: &mut RetryPolicy,
) -> Result<SyncSummary, SyncError> {
    let kiosk = outbox.kiosk_id().to_string();
    let mut summary = SyncSummary {
        high_water: outbox.sent_through(),
        ..SyncSummary::default()
    };
    if !outbox.fast_forwarded() {
        // An empty batch reports the server's high-water mark for the kiosk.
        let ack = retry.send(transport, &SyncBatch::new(&kiosk, Vec::new()))?;
        outbox.fast_forward(ack.high_water_seq)?;
        summary.high_water = ack.high_water_seq;
    }
    let pending: Vec<BatchEntry> = outbox
        .pending()
        .iter()
        .map(|e| BatchEntry {
            seq: e.seq,
            report: e.report.clone(),
        })
        .collect();
    for chunk in plan_batches(&pending) {
        let last = chunk.last().expect("batches are non-empty").seq;
        let ack = retry.send(transport, &SyncBatch::new(&kiosk, chunk.to_vec()))?;
        if ack.high_water_seq < last {
            return Err(SyncError::ShortAck {
                got: ack.high_water_seq,
                want: last,
            });
        }
        outbox.mark_sent(last)?;
        summary.sent += ack.accepted;
        summary.duplicates += ack.duplicates;
        summary.high_water = ack.high_water_seq;
    }
    Ok(summary)
}

#[derive(Deserialize)]
struct ErrorBody {
    #[serde(default)]
    code: String,
    #[serde(default)]
    message: String,
}

/// Posts batches to `{base_url}/api/v1/sync/batches`.
pub struct HttpTransport {
    url: String,
    token: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str, token: &str) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| TransportError::Protocol(e.to_string()))?;
        Ok(Self {
            url: format!("{}/api/v1/sync/batches", base_url.trim_end_matches('/')),
            token: token.into(),
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, batch: &SyncBatch) -> Result<SyncAck, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.token)
            .json(batch)
            .send()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        if resp.status().is_success() {
            return resp
                .json()
                .map_err(|e| TransportError::Protocol(e.to_string()));
        }
        let text = resp.text().unwrap_or_default();
        let body: ErrorBody = serde_json::from_str(&text).unwrap_or(ErrorBody {
            code: String::new(),
            message: text,
        });
        Err(match status {
            401 | 403 => TransportError::Auth(body.message),
            s if s >= 500 => TransportError::Server {
                status: s,
                message: body.message,
            },
            s => TransportError::Rejected {
                status: s,
                code: body.code,
                message: body.message,
            },
        })
    }
}

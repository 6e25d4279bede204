#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Utc};
use mfr::blobs::BlobStore;
use mfr::dataset::identity_seed;
use mfr::pipeline::{decode_photo, extract_face};
use mfr::registry::{EnrollDraft, IdSource, StepClock, Store, StoreOptions};
use mfr::service::{App, Credentials, Ctx};
use mfr_core::image::encode_pnm;
use mfr_core::{generate_synthetic_identity, train_eigenmodel, DetectorParams, EigenModel};

pub const VARIATIONS: usize = 4;

pub fn t0() -> DateTime<Utc> {
    DateTime::from_timestamp(1_760_000_000, 0).unwrap()
}

/// PPM photos of identity `i` of the seed-7 dataset.
pub fn photos(i: usize) -> Vec<Vec<u8>> {
    generate_synthetic_identity(identity_seed(7, i), VARIATIONS)
        .unwrap()
        .iter()
        .map(encode_pnm)
        .collect()
}

/// Model trained on the first three variations of `n` identities.
pub fn model(n: usize, k: usize) -> EigenModel {
    let params = DetectorParams::default();
    let chips: Vec<Vec<f64>> = (0..n)
        .flat_map(|i| photos(i).into_iter().take(3))
        .map(|p| {
            let img = decode_photo(&p).unwrap();
            extract_face(&img, &params).unwrap().chip.pixels().to_vec()
        })
        .collect();
    train_eigenmodel(&chips, k).unwrap()
}

pub fn options() -> StoreOptions {
    StoreOptions {
        sync: false,
        clock: Box::new(StepClock::new(t0(), 1000)),
        ids: IdSource::seeded(1),
        ..StoreOptions::default()
    }
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub app: App,
}

/// Model over the first 12 identities, trained once per test binary.
pub fn shared_model() -> EigenModel {
    static MODEL: std::sync::OnceLock<EigenModel> = std::sync::OnceLock::new();
    MODEL.get_or_init(|| model(12, 16)).clone()
}

/// In-memory registry with the shared model; nobody enrolled. `n` is the
/// number of identities the test will use (at most 12).
pub fn fixture(n: usize, threshold: Option<f64>) -> Fixture {
    assert!(n <= 12);
    let dir = tempfile::tempdir().unwrap();
    let blobs = BlobStore::open(dir.path().join("blobs")).unwrap();
    let app = App::new(
        Store::in_memory(options()),
        blobs,
        Some(shared_model()),
        DetectorParams::default(),
        threshold,
        5,
    )
    .unwrap();
    Fixture { dir, app }
}

/// Enrolls identities `0..n` with their first three photos; returns ids.
pub fn enroll_all(app: &App, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let draft = EnrollDraft {
                full_name: format!("identity {i}"),
                nationality: "SA".into(),
                group_id: None,
            };
            app.enroll(&draft, &photos(i)[..3]).unwrap().person_id
        })
        .collect()
}

pub const CREDENTIALS: &str = r#"
[[tokens]]
token = "admin-secret-1"
role = "admin"
name = "ops-admin"

[[tokens]]
token = "staff-secret-1"
role = "staff"
name = "desk-1"

[[tokens]]
token = "kiosk-secret-1"
role = "kiosk"
name = "gate 5 kiosk"
kiosk_id = "gate5"
"#;

pub fn ctx(f: Fixture) -> (tempfile::TempDir, Arc<Ctx>) {
    let credentials = Credentials::parse(CREDENTIALS).unwrap();
    (
        f.dir,
        Arc::new(Ctx {
            app: f.app,
            credentials,
        }),
    )
}

/// Serves `ctx` on an ephemeral port from a background runtime.
pub fn spawn_server(ctx: Arc<Ctx>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, mfr::service::router(ctx))
                .await
                .unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Delivers batches straight to an [`App`], with optional scripted faults.
pub struct LocalTransport<'a> {
    pub app: &'a App,
    pub principal: mfr::service::Principal,
    /// Consulted before each delivery; `None` means no fault.
    pub faults: Box<dyn FnMut(usize) -> Option<Fault> + 'a>,
    pub calls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Request never arrives.
    DropRequest,
    /// Server applies the batch, the ack is lost.
    DropAck,
    /// Server applies the batch, then the client dies before marking it.
    CrashAfterAck,
    /// The batch is delivered twice.
    Duplicate,
}

pub fn kiosk_principal(kiosk_id: &str) -> mfr::service::Principal {
    mfr::service::Principal {
        role: mfr::service::Role::Kiosk,
        name: format!("kiosk {kiosk_id}"),
        kiosk_id: Some(kiosk_id.into()),
    }
}

impl<'a> LocalTransport<'a> {
    pub fn new(app: &'a App, kiosk_id: &str) -> Self {
        Self {
            app,
            principal: kiosk_principal(kiosk_id),
            faults: Box::new(|_| None),
            calls: 0,
        }
    }

    fn deliver(
        &self,
        batch: &mfr::sync::SyncBatch,
    ) -> Result<mfr::sync::SyncAck, mfr::replay::TransportError> {
        self.app
            .ingest(&self.principal, batch)
            .map_err(|e| match e.status() {
                401 | 403 => mfr::replay::TransportError::Auth(e.to_string()),
                s if s >= 500 => mfr::replay::TransportError::Server {
                    status: s,
                    message: e.to_string(),
                },
                s => mfr::replay::TransportError::Rejected {
                    status: s,
                    code: e.code().into(),
                    message: e.to_string(),
                },
            })
    }
}

impl mfr::replay::Transport for LocalTransport<'_> {
    fn send(
        &mut self,
        batch: &mfr::sync::SyncBatch,
    ) -> Result<mfr::sync::SyncAck, mfr::replay::TransportError> {
        let call = self.calls;
        self.calls += 1;
        match (self.faults)(call) {
            None => self.deliver(batch),
            Some(Fault::DropRequest) => {
                Err(mfr::replay::TransportError::Unreachable("dropped".into()))
            }
            Some(Fault::DropAck) => {
                self.deliver(batch)?;
                Err(mfr::replay::TransportError::Unreachable("ack lost".into()))
            }
            Some(Fault::CrashAfterAck) => {
                self.deliver(batch)?;
                Err(mfr::replay::TransportError::Protocol(
                    "client killed".into(),
                ))
            }
            Some(Fault::Duplicate) => {
                self.deliver(batch)?;
                self.deliver(batch)
            }
        }
    }
}

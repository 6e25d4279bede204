mod common;

use common::*;
use mfr::registry::*;
use mfr::service::{Principal, Role, ServiceError};
use mfr::sync::{BatchEntry, ReportPayload, SyncBatch};
use mfr_core::image::{encode_pnm, ImageBuffer};
use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;
use serde_json::{json, Value};

const JPEG_PROBE: &[u8] = include_bytes!("fixtures/identity7_0_var3.jpg");

fn kiosk() -> Principal {
    Principal {
        role: Role::Kiosk,
        name: "gate 5 kiosk".into(),
        kiosk_id: Some("gate5".into()),
    }
}

fn lost(desc: &str) -> ItemDraft {
    ItemDraft {
        kind: ItemKind::Lost,
        category: Category::Phone,
        description: desc.into(),
        location: "Gate 5".into(),
        claimed_time: None,
    }
}

fn blank_photo() -> Vec<u8> {
    encode_pnm(&ImageBuffer::new(96, 96, 1, vec![200; 96 * 96]).unwrap())
}

fn item_entry(seq: u64) -> BatchEntry {
    BatchEntry {
        seq,
        report: ReportPayload::item(lost(&format!("kiosk report {seq}")), None),
    }
}

#[test]
fn held_out_probes_rank_first() {
    let f = fixture(10, None);
    let ids = enroll_all(&f.app, 10);
    for (i, id) in ids.iter().enumerate() {
        let probe = &photos(i)[3];
        let out = f.app.identify(probe, Some(3), None).unwrap();
        assert_eq!(
            out.matches.first().map(|m| &m.person_id),
            Some(id),
            "identity {i}"
        );
        for (r, m) in out.matches.iter().enumerate() {
            assert_eq!(m.rank, r + 1);
            assert!(m.distance <= out.threshold);
        }
        assert_eq!(
            out.matches[0].person.as_ref().unwrap().full_name,
            format!("identity {i}")
        );
    }
}

#[test]
fn jpeg_probe_identifies() {
    let f = fixture(10, None);
    let ids = enroll_all(&f.app, 10);
    let out = f.app.identify(JPEG_PROBE, None, None).unwrap();
    assert_eq!(out.matches[0].person_id, ids[0]);
    assert!(out.face_box.w >= 36);
}

#[test]
fn identify_failure_modes() {
    let f = fixture(4, Some(1.0));
    // Detection runs before the gallery check.
    assert!(matches!(
        f.app.identify(&blank_photo(), None, None),
        Err(ServiceError::NoFaceDetected(None))
    ));
    assert!(matches!(
        f.app.identify(&photos(0)[3], None, None),
        Err(ServiceError::EmptyGallery)
    ));
    assert!(matches!(
        f.app.identify(b"not an image", None, None),
        Err(ServiceError::BadImage(_))
    ));
    enroll_all(&f.app, 2);
    assert!(matches!(
        f.app.identify(&photos(0)[3], Some(0), None),
        Err(ServiceError::Validation(_))
    ));
    assert!(matches!(
        f.app.identify(&photos(0)[3], None, Some(-1.0)),
        Err(ServiceError::Validation(_))
    ));
    // A tiny threshold claims no identity.
    let out = f.app.identify(&photos(0)[3], None, Some(1e-9)).unwrap();
    assert!(out.matches.is_empty());
}

#[test]
fn enrollment_checks_every_photo() {
    let f = fixture(4, None);
    let draft = EnrollDraft {
        full_name: "Amina".into(),
        nationality: "SA".into(),
        group_id: Some("g1".into()),
    };
    let p = photos(0);
    assert!(matches!(
        f.app.enroll(&draft, &p[..2]),
        Err(ServiceError::Validation(_))
    ));
    let with_blank = vec![p[0].clone(), p[1].clone(), blank_photo()];
    match f.app.enroll(&draft, &with_blank) {
        Err(ServiceError::NoFaceDetected(Some(d))) => assert_eq!(d, "photo 3"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(f.app.store.read().person_count(), 0);
    let person = f.app.enroll(&draft, &p[..3]).unwrap();
    assert_eq!(person.photo_refs.len(), 3);
    assert!(person.photo_refs.iter().all(|r| f.app.blobs.contains(r)));
    assert_eq!(f.app.published().unwrap().recognizer.gallery.len(), 1);
}

#[test]
fn ingest_dedups_by_origin() {
    let f = fixture(2, None);
    let batch = SyncBatch::new("gate5", (1..=3).map(item_entry).collect());
    let ack = f.app.ingest(&kiosk(), &batch).unwrap();
    assert_eq!(
        (ack.accepted, ack.duplicates, ack.high_water_seq),
        (3, 0, 3)
    );

    let before = f.app.store.log_bytes().unwrap();
    let ack = f.app.ingest(&kiosk(), &batch).unwrap();
    assert_eq!(
        (ack.accepted, ack.duplicates, ack.high_water_seq),
        (0, 3, 3)
    );
    assert_eq!(f.app.store.log_bytes().unwrap(), before);

    let ack = f
        .app
        .ingest(
            &kiosk(),
            &SyncBatch::new("gate5", vec![item_entry(3), item_entry(4)]),
        )
        .unwrap();
    assert_eq!(
        (ack.accepted, ack.duplicates, ack.high_water_seq),
        (1, 1, 4)
    );
    assert_eq!(f.app.store.read().report_count(), 4);
    let id4 = f
        .app
        .store
        .read()
        .origin_report(&Origin {
            kiosk_id: "gate5".into(),
            seq: 4,
        })
        .unwrap()
        .to_string();
    match f.app.store.get_report(&id4).unwrap() {
        Report::Item(r) => assert_eq!(r.description, "kiosk report 4"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn ingest_rejects_bad_batches() {
    let f = fixture(2, None);
    let mut batch = SyncBatch::new("gate5", vec![item_entry(1)]);
    batch.checksum = "00000000".into();
    assert!(matches!(
        f.app.ingest(&kiosk(), &batch),
        Err(ServiceError::ChecksumMismatch)
    ));
    let batch = SyncBatch::new("gate5", vec![item_entry(2), item_entry(1)]);
    assert!(matches!(
        f.app.ingest(&kiosk(), &batch),
        Err(ServiceError::NonAscendingSeq)
    ));
    let batch = SyncBatch::new("gate5", vec![item_entry(0)]);
    assert!(matches!(
        f.app.ingest(&kiosk(), &batch),
        Err(ServiceError::NonAscendingSeq)
    ));
    let batch = SyncBatch::new("gate6", vec![item_entry(1)]);
    assert_eq!(
        f.app.ingest(&kiosk(), &batch).unwrap_err().code(),
        "FORBIDDEN"
    );
    let staff = Principal {
        role: Role::Staff,
        name: "s".into(),
        kiosk_id: None,
    };
    assert_eq!(
        f.app
            .ingest(&staff, &SyncBatch::new("gate5", vec![]))
            .unwrap_err()
            .code(),
        "FORBIDDEN"
    );
    assert_eq!(f.app.store.read().report_count(), 0);
    // An empty batch is a handshake.
    let ack = f
        .app
        .ingest(&kiosk(), &SyncBatch::new("gate5", vec![]))
        .unwrap();
    assert_eq!(ack.high_water_seq, 0);
}

#[test]
fn found_person_matches_missing_report_once() {
    let f = fixture(6, None);
    let ids = enroll_all(&f.app, 6);
    let missing = PersonDraft {
        kind: PersonKind::Missing,
        description: "last seen near gate 5".into(),
        location: "Gate 5".into(),
        subject_person_id: Some(ids[2].clone()),
        claimed_time: None,
    };
    let m = f
        .app
        .submit_person(&missing, Some(&photos(2)[0]), None)
        .unwrap();
    assert!(m.face_found);
    assert!(m.alerts.is_empty());

    let found = PersonDraft {
        kind: PersonKind::FoundAlive,
        description: "elderly man, confused".into(),
        location: "Clinic 3".into(),
        subject_person_id: None,
        claimed_time: None,
    };
    let out = f
        .app
        .submit_person(&found, Some(&photos(2)[3]), None)
        .unwrap();
    assert_eq!(out.alerts.len(), 1);
    match &out.alerts[0].payload {
        AlertPayload::PersonMatch {
            missing_report_id,
            found_report_id,
            person_id,
            ..
        } => {
            assert_eq!(missing_report_id, &m.submission.report_id);
            assert_eq!(found_report_id, &out.submission.report_id);
            assert_eq!(person_id, &ids[2]);
        }
        other => panic!("unexpected {other:?}"),
    }
    let theta = f.app.published().unwrap().threshold.unwrap();
    assert!(f
        .app
        .store
        .evaluate_person_matches(&out.submission.report_id, theta)
        .unwrap()
        .is_empty());
    for id in [&m.submission.report_id, &out.submission.report_id] {
        assert_eq!(
            f.app.store.get_report(id).unwrap().status_str(),
            "MATCH_PROPOSED"
        );
    }
    // A stranger's photo with no open MISSING report raises nothing.
    let other = f
        .app
        .submit_person(&found, Some(&photos(4)[3]), None)
        .unwrap();
    assert!(other.alerts.is_empty());
}

#[test]
fn stale_embeddings_are_recomputed_on_start() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::model(4, 8);
    let open = |version: u64| {
        mfr::service::App::new(
            Store::open(dir.path().join("registry"), options()).unwrap(),
            mfr::blobs::BlobStore::open(dir.path().join("blobs")).unwrap(),
            Some(model.clone().with_version(version)),
            mfr_core::DetectorParams::default(),
            None,
            5,
        )
        .unwrap()
    };
    let first = {
        let app = open(1);
        let ids = enroll_all(&app, 3);
        let p = PersonDraft {
            kind: PersonKind::FoundAlive,
            description: String::new(),
            location: String::new(),
            subject_person_id: None,
            claimed_time: None,
        };
        app.submit_person(&p, Some(&photos(3)[0]), None).unwrap();
        ids[0].clone()
    };
    let app = open(2);
    let state = app.store.read();
    assert!(state
        .person_embeddings(&first)
        .unwrap()
        .iter()
        .all(|e| e.model_version == 2));
    assert_eq!(state.person_embeddings(&first).unwrap().len(), 3);
    assert!(state
        .person_reports()
        .all(|r| r.embedding.as_ref().unwrap().model_version == 2));
    drop(state);
    assert_eq!(app.published().unwrap().recognizer.gallery.len(), 3);
}

// HTTP surface.

struct Api {
    base: String,
    http: Client,
}

impl Api {
    fn new(f: Fixture) -> (tempfile::TempDir, Api) {
        let (dir, ctx) = ctx(f);
        let base = format!("{}/api/v1", spawn_server(ctx));
        (
            dir,
            Api {
                base,
                http: Client::new(),
            },
        )
    }

    fn call(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
    ) -> reqwest::blocking::RequestBuilder {
        let m = reqwest::Method::from_bytes(method.as_bytes()).unwrap();
        let rb = self.http.request(m, format!("{}{path}", self.base));
        match token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }
}

fn send(rb: reqwest::blocking::RequestBuilder) -> (u16, Value) {
    let resp = rb.send().unwrap();
    let status = resp.status().as_u16();
    let text = resp.text().unwrap();
    (
        status,
        serde_json::from_str(&text).unwrap_or(Value::String(text)),
    )
}

fn json_body(
    v: Value,
) -> impl FnOnce(reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
    move |rb| {
        rb.header("content-type", "application/json")
            .body(serde_json::to_vec(&v).unwrap())
    }
}

const ADMIN: Option<&str> = Some("admin-secret-1");
const STAFF: Option<&str> = Some("staff-secret-1");
const KIOSK: Option<&str> = Some("kiosk-secret-1");

#[test]
fn http_identify_and_auth() {
    let f = fixture(6, None);
    enroll_all(&f.app, 6);
    let (_dir, api) = Api::new(f);

    let (s, v) = send(api.call("GET", "/healthz", None));
    assert_eq!(s, 200);
    assert_eq!(v["persons"], 6);

    let form = || {
        Form::new()
            .part(
                "photo",
                Part::bytes(JPEG_PROBE.to_vec()).file_name("probe.jpg"),
            )
            .text("top_n", "2")
    };
    let (s, v) = send(api.call("POST", "/identify", STAFF).multipart(form()));
    assert_eq!(s, 200, "{v}");
    assert_eq!(v["matches"][0]["rank"], 1);
    assert_eq!(v["matches"][0]["person"]["full_name"], "identity 0");
    assert!(v["matches"].as_array().unwrap().len() <= 2);

    let (s, v) = send(api.call("POST", "/identify", None).multipart(form()));
    assert_eq!((s, v["code"].as_str()), (403, Some("FORBIDDEN")));
    let (s, v) = send(
        api.call("POST", "/identify", Some("wrong-token-0"))
            .multipart(form()),
    );
    assert_eq!((s, v["code"].as_str()), (401, Some("AUTH_FAILURE")));

    let blank = Form::new().part("photo", Part::bytes(blank_photo()).file_name("b.pgm"));
    let (s, v) = send(api.call("POST", "/identify", STAFF).multipart(blank));
    assert_eq!((s, v["code"].as_str()), (422, Some("NO_FACE_DETECTED")));
    assert!(v["message"].is_string());

    let (s, v) = send(
        api.call("POST", "/identify", STAFF)
            .multipart(Form::new().text("top_n", "1")),
    );
    assert_eq!((s, v["code"].as_str()), (400, Some("VALIDATION_ERROR")));

    let (s, v) = send(api.call("GET", "/nowhere", None));
    assert_eq!((s, v["code"].as_str()), (404, Some("NOT_FOUND")));
}

#[test]
fn http_empty_gallery_is_conflict() {
    let (_dir, api) = Api::new(fixture(3, Some(1.0)));
    let form = Form::new().part("photo", Part::bytes(JPEG_PROBE.to_vec()).file_name("p.jpg"));
    let (s, v) = send(api.call("POST", "/identify", ADMIN).multipart(form));
    assert_eq!((s, v["code"].as_str()), (409, Some("EMPTY_GALLERY")));
}

#[test]
fn http_enroll_multipart() {
    let (_dir, api) = Api::new(fixture(3, None));
    let mut form = Form::new()
        .text("full_name", "Yusuf")
        .text("nationality", "EG");
    for (i, p) in photos(1).into_iter().take(3).enumerate() {
        form = form.part("photos", Part::bytes(p).file_name(format!("p{i}.ppm")));
    }
    let (s, v) = send(api.call("POST", "/persons", STAFF).multipart(form));
    assert_eq!(s, 201, "{v}");
    let id = v["person_id"].as_str().unwrap().to_string();
    let (s, v) = send(api.call("GET", &format!("/persons/{id}"), ADMIN));
    assert_eq!((s, v["full_name"].as_str()), (200, Some("Yusuf")));
    let photo_ref = v["photo_refs"][0].as_str().unwrap().to_string();
    let resp = api
        .call("GET", &format!("/photos/{photo_ref}"), STAFF)
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert_eq!(resp.bytes().unwrap().to_vec(), photos(1)[0]);

    let two = Form::new()
        .text("full_name", "Short")
        .part(
            "photos",
            Part::bytes(photos(2)[0].clone()).file_name("a.ppm"),
        )
        .part(
            "photos",
            Part::bytes(photos(2)[1].clone()).file_name("b.ppm"),
        );
    let (s, v) = send(api.call("POST", "/persons", STAFF).multipart(two));
    assert_eq!((s, v["code"].as_str()), (400, Some("VALIDATION_ERROR")));
}

#[test]
fn http_report_is_searchable_immediately() {
    let (_dir, api) = Api::new(fixture(2, None));
    let token = "zq7marker";
    let (s, v) = send(json_body(json!({
        "kind": "LOST",
        "category": "phone",
        "description": format!("Samsung phone {token} blue case"),
        "location": "Gate 5"
    }))(api.call("POST", "/reports/items", None)));
    assert_eq!(s, 201, "{v}");
    let id = v["report_id"].as_str().unwrap().to_string();

    let (s, v) = send(api.call("GET", &format!("/reports?query={token}&limit=5"), None));
    assert_eq!(s, 200);
    assert_eq!(v["results"][0]["report"]["report_id"], id.as_str());

    let (s, v) = send(api.call("GET", &format!("/reports/{id}"), None));
    assert_eq!((s, v["status"].as_str()), (200, Some("OPEN")));

    // The public may only report LOST items.
    let (s, v) = send(json_body(
        json!({"kind": "FOUND", "category": "bag", "description": "x"}),
    )(api.call("POST", "/reports/items", None)));
    assert_eq!((s, v["code"].as_str()), (403, Some("FORBIDDEN")));
    let (s, v) = send(json_body(json!({"kind": "LOST", "category": "bag"}))(
        api.call("POST", "/reports/items", None),
    ));
    assert_eq!((s, v["code"].as_str()), (400, Some("VALIDATION_ERROR")));
    let (s, v) = send(api.call("GET", "/reports?query=%22unclosed", None));
    assert_eq!((s, v["code"].as_str()), (400, Some("BAD_QUERY")));
}

#[test]
fn http_listing_pages() {
    let (_dir, api) = Api::new(fixture(2, None));
    for i in 0..5 {
        let (s, _) = send(json_body(
            json!({"kind": "LOST", "category": "bag", "description": format!("bag {i}")}),
        )(api.call("POST", "/reports/items", None)));
        assert_eq!(s, 201);
    }
    let mut seen = Vec::new();
    let mut after: Option<String> = None;
    loop {
        let path = match &after {
            Some(a) => format!("/reports?limit=2&kind=lost&after={}", a.replace('|', "%7C")),
            None => "/reports?limit=2&kind=lost".to_string(),
        };
        let (s, v) = send(api.call("GET", &path, None));
        assert_eq!(s, 200, "{v}");
        for r in v["reports"].as_array().unwrap() {
            seen.push(r["description"].as_str().unwrap().to_string());
        }
        match v["next"].as_str() {
            Some(n) => after = Some(n.to_string()),
            None => break,
        }
    }
    assert_eq!(seen, ["bag 4", "bag 3", "bag 2", "bag 1", "bag 0"]);
    let (s, v) = send(api.call("GET", "/reports?limit=0", None));
    assert_eq!((s, v["code"].as_str()), (400, Some("BAD_PAGE")));
}

#[test]
fn http_claim_and_alert_flow() {
    let (_dir, api) = Api::new(fixture(2, None));
    let form = Form::new()
        .text("kind", "FOUND")
        .text("category", "watch")
        .text("description", "Black Casio watch")
        .text("location", "Gate 5")
        .part(
            "photo",
            Part::bytes(photos(0)[0].clone()).file_name("w.ppm"),
        );
    let (s, v) = send(api.call("POST", "/reports/items", STAFF).multipart(form));
    assert_eq!(s, 201, "{v}");
    let report = v["report_id"].as_str().unwrap().to_string();

    let (s, v) = send(json_body(
        json!({"claimant_name": "Omar", "evidence_text": "engraved initials O.K."}),
    )(api.call(
        "POST",
        &format!("/reports/{report}/claims"),
        None,
    )));
    assert_eq!(s, 201, "{v}");
    let claim = v["claim_id"].as_str().unwrap().to_string();
    assert_eq!(v["decision"], "PENDING");

    let (s, v) = send(api.call("GET", "/alerts?ack=false", STAFF));
    assert_eq!(s, 200);
    let alerts = v.as_array().unwrap();
    assert_eq!(alerts.len(), 1);
    assert_eq!(alerts[0]["kind"], "CLAIM_FILED");
    let alert = alerts[0]["alert_id"].as_str().unwrap().to_string();

    let (s, v) = send(api.call("POST", &format!("/alerts/{alert}/ack"), STAFF));
    assert_eq!((s, v["code"].as_str()), (403, Some("FORBIDDEN")));
    let (s, v) = send(api.call("POST", &format!("/alerts/{alert}/ack"), ADMIN));
    assert_eq!((s, v["acknowledged_by"].as_str()), (200, Some("ops-admin")));
    let (s, v) = send(api.call("POST", &format!("/alerts/{alert}/ack"), ADMIN));
    assert_eq!((s, v["code"].as_str()), (409, Some("ALREADY_ACKNOWLEDGED")));
    let (_, v) = send(api.call("GET", "/alerts?ack=false", ADMIN));
    assert!(v.as_array().unwrap().is_empty());

    let decide = |token, decision: &str| {
        send(json_body(json!({ "decision": decision }))(api.call(
            "POST",
            &format!("/claims/{claim}/decision"),
            token,
        )))
    };
    assert_eq!(decide(STAFF, "ACCEPTED").0, 403);
    let (s, v) = decide(ADMIN, "ACCEPTED");
    assert_eq!(s, 200, "{v}");
    assert_eq!(v["report"]["status"], "RESOLVED");
    assert_eq!(decide(ADMIN, "DENIED").1["code"], "ALREADY_DECIDED");

    let (s, v) = send(json_body(
        json!({"claimant_name": "Late", "evidence_text": "mine too"}),
    )(api.call(
        "POST",
        &format!("/reports/{report}/claims"),
        None,
    )));
    assert_eq!((s, v["code"].as_str()), (409, Some("REPORT_NOT_CLAIMABLE")));
    let (s, v) = send(api.call("POST", &format!("/reports/{report}/reject"), ADMIN));
    assert_eq!((s, v["code"].as_str()), (409, Some("INVALID_TRANSITION")));
}

#[test]
fn http_sync_batches() {
    let (_dir, api) = Api::new(fixture(2, None));
    let batch = SyncBatch::new("gate5", (1..=3).map(item_entry).collect());
    let post = |b: &SyncBatch, token| {
        send(json_body(serde_json::to_value(b).unwrap())(api.call(
            "POST",
            "/sync/batches",
            token,
        )))
    };
    let (s, v) = post(&batch, KIOSK);
    assert_eq!(s, 200, "{v}");
    assert_eq!(
        (v["accepted"].as_u64(), v["high_water_seq"].as_u64()),
        (Some(3), Some(3))
    );
    let (_, v) = post(&batch, KIOSK);
    assert_eq!(v["duplicates"], 3);
    assert_eq!(post(&batch, STAFF).0, 403);
    let mut bad = batch.clone();
    bad.checksum = "deadbeef".into();
    assert_eq!(post(&bad, KIOSK).1["code"], "CHECKSUM_MISMATCH");
}

#[test]
fn http_body_limit() {
    let (_dir, api) = Api::new(fixture(2, None));
    let big = vec![b'a'; mfr::service::MAX_BODY_BYTES + 1024];
    let form = Form::new()
        .text("kind", "LOST")
        .text("category", "bag")
        .part("photo", Part::bytes(big).file_name("big.ppm"));
    let (s, v) = send(api.call("POST", "/reports/items", None).multipart(form));
    assert_eq!((s, v["code"].as_str()), (413, Some("PAYLOAD_TOO_LARGE")));
}

#[test]
fn http_person_report_decision() {
    let f = fixture(4, None);
    let ids = enroll_all(&f.app, 4);
    let (_dir, api) = Api::new(f);
    let form = Form::new()
        .text("kind", "DECEASED")
        .text("location", "Mina")
        .part(
            "photo",
            Part::bytes(photos(1)[3].clone()).file_name("p.ppm"),
        );
    let (s, v) = send(api.call("POST", "/reports/persons", STAFF).multipart(form));
    assert_eq!(s, 201, "{v}");
    assert_eq!(v["face_found"], true);
    let id = v["report_id"].as_str().unwrap().to_string();
    let (s, v) = send(
        json_body(json!({"action": "CONFIRM", "person_id": ids[1]}))(api.call(
            "POST",
            &format!("/reports/{id}/decision"),
            STAFF,
        )),
    );
    assert_eq!(s, 200, "{v}");
    assert_eq!(
        (v["status"].as_str(), v["matched_person_id"].as_str()),
        (Some("CONFIRMED"), Some(ids[1].as_str()))
    );
    let form = Form::new().text("kind", "FOUND_ALIVE");
    let (s, v) = send(api.call("POST", "/reports/persons", None).multipart(form));
    assert_eq!((s, v["code"].as_str()), (403, Some("FORBIDDEN")));
}

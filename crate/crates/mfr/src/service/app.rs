use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use mfr_core::calibrate::{calibrate_threshold, distance_profile};
use mfr_core::{DetectorParams, EigenModel, Embedding, FaceBox};
use serde::{Deserialize, Serialize};

use super::auth::{AuthError, Principal, Role};
use super::error::ServiceError;
use crate::blobs::BlobStore;
use crate::pipeline::{PipelineError, Recognizer};
use crate::registry::*;
use crate::sync::{ReportPayload, SyncAck, SyncBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonSummary {
    pub full_name: String,
    pub nationality: String,
    pub group_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyMatch {
    pub rank: usize,
    pub person_id: String,
    pub distance: f64,
    pub person: Option<PersonSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyResponse {
    pub matches: Vec<IdentifyMatch>,
    pub face_box: FaceBox,
    pub model_version: u64,
    pub threshold: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonSubmission {
    #[serde(flatten)]
    pub submission: Submission,
    pub face_found: bool,
    pub alerts: Vec<Alert>,
}

/// Model, gallery and threshold as seen by identify requests.
#[derive(Debug)]
pub struct Published {
    pub recognizer: Recognizer,
    pub threshold: Option<f64>,
}

/// Everything a request handler needs: registry, blobs and the published
/// recognition snapshot.
pub struct App {
    pub store: Store,
    pub blobs: BlobStore,
    model: Option<EigenModel>,
    params: DetectorParams,
    configured_threshold: Option<f64>,
    pub default_top_n: usize,
    published: RwLock<Option<Arc<Published>>>,
    publish_lock: Mutex<()>,
}

pub fn require(p: &Principal, roles: &[Role]) -> Result<(), ServiceError> {
    if p.is(roles) {
        Ok(())
    } else {
        Err(AuthError::Forbidden(p.role).into())
    }
}

impl App {
    pub fn new(
        store: Store,
        blobs: BlobStore,
        model: Option<EigenModel>,
        params: DetectorParams,
        threshold: Option<f64>,
        default_top_n: usize,
    ) -> Result<Self, ServiceError> {
        let app = Self {
            store,
            blobs,
            model,
            params,
            configured_threshold: threshold,
            default_top_n,
            published: RwLock::new(None),
            publish_lock: Mutex::new(()),
        };
        app.reembed_stale()?;
        app.republish();
        Ok(app)
    }

    pub fn model_version(&self) -> Option<u64> {
        self.model.as_ref().map(EigenModel::version)
    }

    pub fn published(&self) -> Option<Arc<Published>> {
        self.published
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Rebuilds the gallery from the registry and swaps it in.
    pub fn republish(&self) {
        let Some(model) = &self.model else { return };
        let _guard = self.publish_lock.lock().unwrap_or_else(|e| e.into_inner());
        let (gallery, groups) = {
            let state = self.store.read();
            let gallery = state.gallery(model.version());
            let groups: Vec<Vec<Embedding>> = gallery.iter().map(|(_, e)| e.to_vec()).collect();
            (gallery, groups)
        };
        let threshold = self.configured_threshold.or_else(|| {
            distance_profile(&groups)
                .ok()
                .and_then(|p| calibrate_threshold(&p))
                .filter(|t| *t > 0.0)
        });
        let published = Published {
            recognizer: Recognizer {
                model: model.clone(),
                gallery,
                params: self.params.clone(),
            },
            threshold,
        };
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(published));
    }

    /// Recomputes embeddings stored under an older model version.
    fn reembed_stale(&self) -> Result<(), ServiceError> {
        let Some(model) = &self.model else {
            return Ok(());
        };
        let version = model.version();
        let (persons, reports): (Vec<(String, Vec<String>)>, Vec<(String, String)>) = {
            let state = self.store.read();
            (
                state
                    .persons()
                    .filter(|p| p.embeddings.iter().any(|e| e.model_version != version))
                    .map(|p| (p.record.person_id.clone(), p.record.photo_refs.clone()))
                    .collect(),
                state
                    .person_reports()
                    .filter(|r| {
                        r.embedding
                            .as_ref()
                            .is_some_and(|e| e.model_version != version)
                    })
                    .map(|r| (r.report_id.clone(), r.photo_ref.clone()))
                    .collect(),
            )
        };
        for (person_id, refs) in persons {
            let mut embs = Vec::new();
            for r in &refs {
                match self
                    .blobs
                    .get(r)
                    .map_err(|e| ServiceError::Internal(e.to_string()))
                {
                    Ok(bytes) => match crate::pipeline::embed_photo(&bytes, model, &self.params) {
                        Ok((e, _)) => embs.push(e),
                        Err(e) => {
                            tracing::warn!(%person_id, blob = %r, error = %e, "photo no longer embeds")
                        }
                    },
                    Err(e) => tracing::warn!(%person_id, blob = %r, error = %e, "photo missing"),
                }
            }
            self.store.replace_person_embeddings(&person_id, embs)?;
        }
        for (report_id, photo) in reports {
            let emb = self
                .blobs
                .get(&photo)
                .ok()
                .and_then(|b| crate::pipeline::embed_photo(&b, model, &self.params).ok())
                .map(|(e, _)| e);
            self.store.attach_embedding(&report_id, emb)?;
        }
        Ok(())
    }

    pub fn identify(
        &self,
        photo: &[u8],
        top_n: Option<usize>,
        threshold: Option<f64>,
    ) -> Result<IdentifyResponse, ServiceError> {
        let started = Instant::now();
        let published = self.published().ok_or(ServiceError::ModelUnavailable)?;
        let top_n = top_n.unwrap_or(self.default_top_n);
        if top_n == 0 {
            return Err(ServiceError::Validation("top_n must be at least 1".into()));
        }
        if let Some(t) = threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ServiceError::Validation(
                    "threshold must be positive".into(),
                ));
            }
        }
        let image = crate::pipeline::decode_photo(photo)
            .map_err(|e| ServiceError::BadImage(e.to_string()))?;
        let rec = &published.recognizer;
        let found = crate::pipeline::extract_face(&image, &rec.params)?;
        if rec.gallery.is_empty() {
            return Err(ServiceError::EmptyGallery);
        }
        let theta = threshold
            .or(published.threshold)
            .ok_or(ServiceError::ThresholdUnavailable)?;
        let probe = rec
            .model
            .embed(found.chip.pixels())
            .map_err(PipelineError::from)?;
        let results = rec
            .gallery
            .identify(&probe, top_n, theta)
            .map_err(PipelineError::from)?;
        let state = self.store.read();
        let matches = results
            .into_iter()
            .map(|m| IdentifyMatch {
                person: state.person(&m.person_id).map(|p| PersonSummary {
                    full_name: p.full_name.clone(),
                    nationality: p.nationality.clone(),
                    group_id: p.group_id.clone(),
                }),
                rank: m.rank,
                person_id: m.person_id,
                distance: m.distance,
            })
            .collect();
        Ok(IdentifyResponse {
            matches,
            face_box: found.face,
            model_version: rec.model.version(),
            threshold: theta,
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }

    /// Enrolls a person from at least three photos, each with a detectable face.
    pub fn enroll(
        &self,
        draft: &EnrollDraft,
        photos: &[Vec<u8>],
    ) -> Result<PersonRecord, ServiceError> {
        draft.validate().map_err(ServiceError::Validation)?;
        let model = self.model.as_ref().ok_or(ServiceError::ModelUnavailable)?;
        if photos.len() < mfr_core::gallery::MIN_ENROLL_CHIPS {
            return Err(ServiceError::Validation(format!(
                "enrollment needs at least {} photos, got {}",
                mfr_core::gallery::MIN_ENROLL_CHIPS,
                photos.len()
            )));
        }
        let mut embeddings = Vec::with_capacity(photos.len());
        for (i, p) in photos.iter().enumerate() {
            match crate::pipeline::embed_photo(p, model, &self.params) {
                Ok((e, _)) => embeddings.push(e),
                Err(PipelineError::NoFaceDetected) => {
                    return Err(ServiceError::NoFaceDetected(Some(format!(
                        "photo {}",
                        i + 1
                    ))))
                }
                Err(PipelineError::BadImage(e)) => {
                    return Err(ServiceError::BadImage(format!("photo {}: {e}", i + 1)))
                }
                Err(e) => return Err(e.into()),
            }
        }
        let refs = self.put_blobs(photos)?;
        let person = self.store.enroll_person(draft, refs, embeddings)?;
        self.republish();
        Ok(person)
    }

    fn put_blobs(&self, photos: &[Vec<u8>]) -> Result<Vec<String>, ServiceError> {
        photos
            .iter()
            .map(|p| {
                self.blobs
                    .put(p)
                    .map_err(|e| ServiceError::Internal(e.to_string()))
            })
            .collect()
    }

    fn put_photo(&self, photo: Option<&[u8]>) -> Result<Option<String>, ServiceError> {
        match photo {
            Some(p) if !p.is_empty() => {
                crate::pipeline::decode_photo(p)
                    .map_err(|e| ServiceError::BadImage(e.to_string()))?;
                Ok(Some(
                    self.blobs
                        .put(p)
                        .map_err(|e| ServiceError::Internal(e.to_string()))?,
                ))
            }
            _ => Ok(None),
        }
    }

    pub fn submit_item(
        &self,
        who: &Principal,
        draft: &ItemDraft,
        photo: Option<&[u8]>,
        origin: Option<Origin>,
    ) -> Result<Submission, ServiceError> {
        if who.role == Role::Public && draft.kind != ItemKind::Lost {
            return Err(AuthError::Forbidden(Role::Public).into());
        }
        draft
            .validate(photo.is_some_and(|p| !p.is_empty()))
            .map_err(ServiceError::Validation)?;
        let photo_ref = self.put_photo(photo)?;
        Ok(self.store.submit_item_report(draft, photo_ref, origin)?)
    }

    /// Stores a person report, embeds its photo and looks for matches.
    pub fn submit_person(
        &self,
        draft: &PersonDraft,
        photo: Option<&[u8]>,
        origin: Option<Origin>,
    ) -> Result<PersonSubmission, ServiceError> {
        draft
            .validate(photo.is_some_and(|p| !p.is_empty()))
            .map_err(ServiceError::Validation)?;
        let photo = photo.expect("validated");
        let photo_ref = self.put_photo(Some(photo))?;
        let submission = self.store.submit_person_report(draft, photo_ref, origin)?;
        if submission.duplicate {
            return Ok(PersonSubmission {
                submission,
                face_found: false,
                alerts: Vec::new(),
            });
        }
        let (face_found, alerts) = self.embed_and_match(&submission.report_id, photo)?;
        Ok(PersonSubmission {
            submission,
            face_found,
            alerts,
        })
    }

    fn embed_and_match(
        &self,
        report_id: &str,
        photo: &[u8],
    ) -> Result<(bool, Vec<Alert>), ServiceError> {
        let Some(published) = self.published() else {
            return Ok((false, Vec::new()));
        };
        let embedding = match published.recognizer.embed(photo) {
            Ok((e, _)) => Some(e),
            Err(PipelineError::NoFaceDetected) => None,
            Err(e) => return Err(e.into()),
        };
        let found = embedding.is_some();
        self.store.attach_embedding(report_id, embedding)?;
        let alerts = match (found, published.threshold) {
            (true, Some(theta)) => self.store.evaluate_person_matches(report_id, theta)?,
            _ => Vec::new(),
        };
        Ok((found, alerts))
    }

    /// Applies a kiosk batch. Each report is committed on its own, so a
    /// retried batch only adds what is missing.
    pub fn ingest(&self, who: &Principal, batch: &SyncBatch) -> Result<SyncAck, ServiceError> {
        require(who, &[Role::Kiosk])?;
        if who.kiosk_id.as_deref() != Some(batch.kiosk_id.as_str()) {
            return Err(AuthError::Forbidden(who.role).into());
        }
        if !batch.checksum_ok() {
            return Err(ServiceError::ChecksumMismatch);
        }
        if !batch.seqs_ascending() {
            return Err(ServiceError::NonAscendingSeq);
        }
        let (mut accepted, mut duplicates) = (0, 0);
        for entry in &batch.reports {
            let origin = Origin {
                kiosk_id: batch.kiosk_id.clone(),
                seq: entry.seq,
            };
            if self.store.read().origin_report(&origin).is_some() {
                duplicates += 1;
                continue;
            }
            let photo = entry
                .report
                .photo_bytes()
                .map_err(|e| ServiceError::Validation(format!("seq {}: {e}", entry.seq)))?;
            let dup = match &entry.report {
                ReportPayload::Item { draft, .. } => {
                    self.submit_item(who, draft, photo.as_deref(), Some(origin))?
                        .duplicate
                }
                ReportPayload::Person { draft, .. } => {
                    self.submit_person(draft, photo.as_deref(), Some(origin))?
                        .submission
                        .duplicate
                }
            };
            if dup {
                duplicates += 1;
            } else {
                accepted += 1;
            }
        }
        Ok(SyncAck {
            kiosk_id: batch.kiosk_id.clone(),
            high_water_seq: self.store.read().high_water(&batch.kiosk_id),
            accepted,
            duplicates,
        })
    }
}

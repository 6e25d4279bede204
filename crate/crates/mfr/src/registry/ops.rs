use chrono::{DateTime, Utc};
use mfr_core::lifecycle::{ClaimDecision, ItemStatus, PersonReportStatus};
use mfr_core::search::{parse_query, QueryError};
use mfr_core::{distance, Embedding};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::records::*;
use super::state::{Event, State};
use super::store::{derived_id, Store, StoreError, Tx};

pub const MAX_PAGE: usize = 500;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("report {0} not found")]
    ReportNotFound(String),
    #[error("report {report_id} is {status}, not OPEN")]
    ReportNotClaimable { report_id: String, status: String },
    #[error("claim evidence is empty")]
    EmptyEvidence,
    #[error("claim {0} not found")]
    ClaimNotFound(String),
    #[error("claim {0} is already decided")]
    AlreadyDecided(String),
    #[error("person {0} not found")]
    PersonNotFound(String),
    #[error("alert {0} not found")]
    AlertNotFound(String),
    #[error("alert {0} is already acknowledged")]
    AlreadyAcknowledged(String),
    #[error("report {report_id} cannot go from {from} to {to}")]
    InvalidTransition {
        report_id: String,
        from: String,
        to: String,
    },
    #[error("page size must be within 1..={MAX_PAGE}, got {0}")]
    BadPage(usize),
    #[error("bad cursor")]
    BadCursor,
    #[error(transparent)]
    BadQuery(#[from] QueryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Result of a submission. A repeated origin yields the first report's id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub report_id: String,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFilter {
    /// Any item or person kind, e.g. `FOUND` or `MISSING`.
    pub kind: Option<String>,
    pub status: Option<String>,
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPage {
    pub reports: Vec<Report>,
    /// Pass back as `after` to get the next page.
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReport {
    pub score: f64,
    pub report: Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PersonAction {
    /// Confirm the proposed match, or match and confirm in one step when a
    /// person id is supplied for an OPEN report.
    Confirm,
    /// Turn down the proposed match.
    Reject,
    Close,
}

fn cursor(r: &Report) -> String {
    format!("{}|{}", r.reported_at().timestamp_millis(), r.report_id())
}

fn parse_cursor(s: &str) -> Result<(i64, String), RegistryError> {
    let (ms, id) = s.split_once('|').ok_or(RegistryError::BadCursor)?;
    Ok((
        ms.parse().map_err(|_| RegistryError::BadCursor)?,
        id.to_string(),
    ))
}

/// Sort key for listings: newest first, then by id.
fn listing_key(r: &Report) -> (std::cmp::Reverse<i64>, String) {
    (
        std::cmp::Reverse(r.reported_at().timestamp_millis()),
        r.report_id().to_string(),
    )
}

impl ReportFilter {
    pub fn admits(&self, r: &Report) -> bool {
        let norm = |s: &str| s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        self.kind.as_deref().is_none_or(|k| norm(k) == r.kind_str())
            && self
                .status
                .as_deref()
                .is_none_or(|s| norm(s) == r.status_str())
            && self.since.is_none_or(|t| r.reported_at() >= t)
            && self.until.is_none_or(|t| r.reported_at() <= t)
    }
}

fn item_transition(tx: &mut Tx<'_>, r: &ItemReport, to: ItemStatus) -> Result<(), RegistryError> {
    if !r.status.can_transition_to(to) {
        return Err(RegistryError::InvalidTransition {
            report_id: r.report_id.clone(),
            from: r.status.as_str().into(),
            to: to.as_str().into(),
        });
    }
    tx.push(Event::ItemStatusChanged {
        report_id: r.report_id.clone(),
        from: r.status,
        to,
    });
    Ok(())
}

fn person_transition(
    tx: &mut Tx<'_>,
    r: &PersonReport,
    from: PersonReportStatus,
    to: PersonReportStatus,
    matched: Option<String>,
) -> Result<(), RegistryError> {
    if !from.can_transition_to(to) {
        return Err(RegistryError::InvalidTransition {
            report_id: r.report_id.clone(),
            from: from.as_str().into(),
            to: to.as_str().into(),
        });
    }
    tx.push(Event::PersonStatusChanged {
        report_id: r.report_id.clone(),
        from,
        to,
        matched_person_id: matched,
    });
    Ok(())
}

fn report_id_for(origin: &Option<Origin>, tx: &mut Tx<'_>) -> String {
    match origin {
        Some(o) => derived_id(&format!("report/{}/{}", o.kiosk_id, o.seq)),
        None => tx.new_id(),
    }
}

/// Smallest distance from `probe` to a MISSING report's reference faces: the
/// named person's enrolled embeddings and the report's own photo.
fn missing_distance(state: &State, missing: &PersonReport, probe: &Embedding) -> Option<f64> {
    let enrolled = missing
        .subject_person_id
        .as_deref()
        .and_then(|p| state.person_embeddings(p))
        .unwrap_or(&[]);
    enrolled
        .iter()
        .chain(missing.embedding.as_ref())
        .filter_map(|e| distance(e, probe).ok())
        .min_by(f64::total_cmp)
}

impl Store {
    pub fn enroll_person(
        &self,
        draft: &EnrollDraft,
        photo_refs: Vec<String>,
        embeddings: Vec<Embedding>,
    ) -> Result<PersonRecord, RegistryError> {
        draft.validate().map_err(RegistryError::Validation)?;
        if photo_refs.len() < mfr_core::gallery::MIN_ENROLL_CHIPS {
            return Err(RegistryError::Validation(format!(
                "enrollment needs at least {} photos, got {}",
                mfr_core::gallery::MIN_ENROLL_CHIPS,
                photo_refs.len()
            )));
        }
        self.transact(|_, tx| {
            let person = PersonRecord {
                person_id: tx.new_id(),
                full_name: draft.full_name.trim().to_string(),
                nationality: draft.nationality.trim().to_string(),
                group_id: draft.group_id.clone().filter(|g| !g.trim().is_empty()),
                enrolled_at: tx.now(),
                photo_refs,
            };
            tx.push(Event::PersonEnrolled {
                person: person.clone(),
                embeddings,
            });
            Ok(person)
        })
    }

    pub fn replace_person_embeddings(
        &self,
        person_id: &str,
        embeddings: Vec<Embedding>,
    ) -> Result<(), RegistryError> {
        self.transact(|state, tx| {
            if state.person(person_id).is_none() {
                return Err(RegistryError::PersonNotFound(person_id.into()));
            }
            tx.push(Event::PersonEmbeddingsReplaced {
                person_id: person_id.into(),
                embeddings,
            });
            Ok(())
        })
    }

    pub fn submit_item_report(
        &self,
        draft: &ItemDraft,
        photo_ref: Option<String>,
        origin: Option<Origin>,
    ) -> Result<Submission, RegistryError> {
        self.transact(|state, tx| {
            if let Some(first) = origin.as_ref().and_then(|o| state.origin_report(o)) {
                return Ok(Submission {
                    report_id: first.to_string(),
                    duplicate: true,
                });
            }
            draft
                .validate(photo_ref.is_some())
                .map_err(RegistryError::Validation)?;
            let report = ItemReport {
                report_id: report_id_for(&origin, tx),
                kind: draft.kind,
                category: draft.category,
                description: draft.description.trim().to_string(),
                location: draft.location.trim().to_string(),
                reported_at: tx.now(),
                claimed_time: draft.claimed_time,
                photo_ref,
                status: ItemStatus::Open,
                origin,
            };
            let id = report.report_id.clone();
            tx.push(Event::ItemReported { report });
            Ok(Submission {
                report_id: id,
                duplicate: false,
            })
        })
    }

    pub fn submit_person_report(
        &self,
        draft: &PersonDraft,
        photo_ref: Option<String>,
        origin: Option<Origin>,
    ) -> Result<Submission, RegistryError> {
        self.transact(|state, tx| {
            if let Some(first) = origin.as_ref().and_then(|o| state.origin_report(o)) {
                return Ok(Submission {
                    report_id: first.to_string(),
                    duplicate: true,
                });
            }
            draft
                .validate(photo_ref.is_some())
                .map_err(RegistryError::Validation)?;
            if let Some(p) = &draft.subject_person_id {
                if state.person(p).is_none() {
                    return Err(RegistryError::Validation(format!("unknown person {p}")));
                }
            }
            let report = PersonReport {
                report_id: report_id_for(&origin, tx),
                kind: draft.kind,
                description: draft.description.trim().to_string(),
                subject_person_id: draft.subject_person_id.clone(),
                photo_ref: photo_ref.expect("validated"),
                embedding: None,
                location: draft.location.trim().to_string(),
                reported_at: tx.now(),
                claimed_time: draft.claimed_time,
                status: PersonReportStatus::Open,
                matched_person_id: None,
                origin,
            };
            let id = report.report_id.clone();
            tx.push(Event::PersonReported { report });
            Ok(Submission {
                report_id: id,
                duplicate: false,
            })
        })
    }

    pub fn attach_embedding(
        &self,
        report_id: &str,
        embedding: Option<Embedding>,
    ) -> Result<(), RegistryError> {
        self.transact(|state, tx| {
            if state.person_report(report_id).is_none() {
                return Err(RegistryError::ReportNotFound(report_id.into()));
            }
            tx.push(Event::PersonEmbeddingAttached {
                report_id: report_id.into(),
                embedding,
            });
            Ok(())
        })
    }

    /// Pairs the report with counterpart reports within `threshold`, raising
    /// one PERSON_MATCH alert per new pair and proposing the match on both.
    pub fn evaluate_person_matches(
        &self,
        report_id: &str,
        threshold: f64,
    ) -> Result<Vec<Alert>, RegistryError> {
        self.transact(|state, tx| {
            let report = state
                .person_report(report_id)
                .ok_or_else(|| RegistryError::ReportNotFound(report_id.into()))?;
            if report.embedding.is_none()
                || matches!(
                    report.status,
                    PersonReportStatus::Confirmed | PersonReportStatus::Closed
                )
            {
                return Ok(Vec::new());
            }
            let mut pairs: Vec<(f64, &PersonReport, &PersonReport)> = Vec::new();
            for other in state.person_reports() {
                if other.report_id == report.report_id || other.status != PersonReportStatus::Open {
                    continue;
                }
                let (missing, found) = match (report.kind.is_found(), other.kind.is_found()) {
                    (true, false) => (other, report),
                    (false, true) => (report, other),
                    _ => continue,
                };
                if state.has_alert_pair(&missing.report_id, &found.report_id) {
                    continue;
                }
                let Some(found_emb) = found.embedding.as_ref() else {
                    continue;
                };
                if let Some(d) = missing_distance(state, missing, found_emb) {
                    if d <= threshold {
                        pairs.push((d, missing, found));
                    }
                }
            }
            pairs.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| a.1.report_id.cmp(&b.1.report_id))
                    .then_with(|| a.2.report_id.cmp(&b.2.report_id))
            });

            let mut status: std::collections::BTreeMap<&str, PersonReportStatus> =
                Default::default();
            let mut alerts = Vec::new();
            for (d, missing, found) in pairs {
                let person_id = missing
                    .subject_person_id
                    .clone()
                    .expect("MISSING reports name a person");
                for r in [missing, found] {
                    let current = *status.get(r.report_id.as_str()).unwrap_or(&r.status);
                    if current == PersonReportStatus::Open {
                        person_transition(
                            tx,
                            r,
                            current,
                            PersonReportStatus::MatchProposed,
                            Some(person_id.clone()),
                        )?;
                        status.insert(&r.report_id, PersonReportStatus::MatchProposed);
                    }
                }
                let alert = Alert {
                    alert_id: derived_id(&format!(
                        "alert/match/{}/{}",
                        missing.report_id, found.report_id
                    )),
                    payload: AlertPayload::PersonMatch {
                        missing_report_id: missing.report_id.clone(),
                        found_report_id: found.report_id.clone(),
                        person_id,
                        distance: d,
                    },
                    raised_at: tx.now(),
                    acknowledged_by: None,
                    acknowledged_at: None,
                };
                tx.push(Event::AlertRaised {
                    alert: alert.clone(),
                });
                alerts.push(alert);
            }
            Ok(alerts)
        })
    }

    /// Operator decision on a person report.
    pub fn decide_person_report(
        &self,
        report_id: &str,
        action: PersonAction,
        person_id: Option<&str>,
    ) -> Result<PersonReport, RegistryError> {
        self.transact(|state, tx| {
            let r = state
                .person_report(report_id)
                .ok_or_else(|| RegistryError::ReportNotFound(report_id.into()))?;
            use PersonReportStatus::*;
            match action {
                PersonAction::Confirm => {
                    let mut from = r.status;
                    let mut matched = r.matched_person_id.clone();
                    if from == Open {
                        let p = person_id.ok_or_else(|| {
                            RegistryError::Validation(
                                "confirming an OPEN report needs a person_id".into(),
                            )
                        })?;
                        if state.person(p).is_none() {
                            return Err(RegistryError::PersonNotFound(p.into()));
                        }
                        person_transition(tx, r, Open, MatchProposed, Some(p.to_string()))?;
                        from = MatchProposed;
                        matched = Some(p.to_string());
                    } else if let (Some(p), Some(m)) = (person_id, &matched) {
                        if p != m {
                            return Err(RegistryError::Validation(format!(
                                "report is matched to {m}, not {p}"
                            )));
                        }
                    }
                    person_transition(tx, r, from, Confirmed, matched)?;
                }
                PersonAction::Reject => person_transition(tx, r, r.status, Open, None)?,
                PersonAction::Close => person_transition(tx, r, r.status, Closed, None)?,
            }
            let mut out = r.clone();
            if let Some(Event::PersonStatusChanged {
                to,
                matched_person_id,
                ..
            }) = tx.events().last()
            {
                out.status = *to;
                out.matched_person_id = matched_person_id.clone();
            }
            Ok(out)
        })
    }

    pub fn file_claim(
        &self,
        report_id: &str,
        draft: &ClaimDraft,
        evidence_photo_ref: Option<String>,
    ) -> Result<Claim, RegistryError> {
        self.transact(|state, tx| {
            let report = state
                .item(report_id)
                .ok_or_else(|| RegistryError::ReportNotFound(report_id.into()))?;
            if draft.claimant_name.trim().is_empty() {
                return Err(RegistryError::Validation(
                    "claimant_name must not be empty".into(),
                ));
            }
            if draft.evidence_text.trim().is_empty() && evidence_photo_ref.is_none() {
                return Err(RegistryError::EmptyEvidence);
            }
            if report.kind != ItemKind::Found || !report.status.is_claimable() {
                return Err(RegistryError::ReportNotClaimable {
                    report_id: report_id.into(),
                    status: if report.kind == ItemKind::Found {
                        report.status.as_str().into()
                    } else {
                        "a LOST report".into()
                    },
                });
            }
            item_transition(tx, report, ItemStatus::ClaimPending)?;
            let claim = Claim {
                claim_id: tx.new_id(),
                report_id: report_id.into(),
                claimant_name: draft.claimant_name.trim().to_string(),
                evidence_text: draft.evidence_text.trim().to_string(),
                evidence_photo_ref,
                filed_at: tx.now(),
                decision: ClaimDecision::Pending,
                decided_at: None,
            };
            tx.push(Event::ClaimFiled {
                claim: claim.clone(),
            });
            let alert = Alert {
                alert_id: derived_id(&format!("alert/claim/{}", claim.claim_id)),
                payload: AlertPayload::ClaimFiled {
                    report_id: report_id.into(),
                    claim_id: claim.claim_id.clone(),
                },
                raised_at: tx.now(),
                acknowledged_by: None,
                acknowledged_at: None,
            };
            tx.push(Event::AlertRaised { alert });
            Ok(claim)
        })
    }

    pub fn resolve_claim(
        &self,
        claim_id: &str,
        decision: ClaimDecision,
    ) -> Result<(Claim, ItemReport), RegistryError> {
        if decision == ClaimDecision::Pending {
            return Err(RegistryError::Validation(
                "decision must be ACCEPTED or DENIED".into(),
            ));
        }
        self.transact(|state, tx| {
            let claim = state
                .claim(claim_id)
                .ok_or_else(|| RegistryError::ClaimNotFound(claim_id.into()))?;
            if claim.decision != ClaimDecision::Pending {
                return Err(RegistryError::AlreadyDecided(claim_id.into()));
            }
            let report = state
                .item(&claim.report_id)
                .expect("claims reference reports");
            let outcome = decision.item_outcome();
            item_transition(tx, report, outcome)?;
            tx.push(Event::ClaimDecided {
                claim_id: claim_id.into(),
                decision,
                at: tx.now(),
            });
            let mut c = claim.clone();
            c.decision = decision;
            c.decided_at = Some(tx.now());
            let mut r = report.clone();
            r.status = outcome;
            Ok((c, r))
        })
    }

    /// Administrative invalidation. A pending claim is denied in the same commit.
    pub fn reject_item_report(&self, report_id: &str) -> Result<ItemReport, RegistryError> {
        self.transact(|state, tx| {
            let report = state
                .item(report_id)
                .ok_or_else(|| RegistryError::ReportNotFound(report_id.into()))?;
            item_transition(tx, report, ItemStatus::Rejected)?;
            if let Some(c) = state.active_claim(report_id) {
                tx.push(Event::ClaimDecided {
                    claim_id: c.claim_id.clone(),
                    decision: ClaimDecision::Denied,
                    at: tx.now(),
                });
            }
            let mut r = report.clone();
            r.status = ItemStatus::Rejected;
            Ok(r)
        })
    }

    pub fn acknowledge_alert(
        &self,
        alert_id: &str,
        operator: &str,
    ) -> Result<Alert, RegistryError> {
        self.transact(|state, tx| {
            let alert = state
                .alert(alert_id)
                .ok_or_else(|| RegistryError::AlertNotFound(alert_id.into()))?;
            if alert.acknowledged_by.is_some() {
                return Err(RegistryError::AlreadyAcknowledged(alert_id.into()));
            }
            tx.push(Event::AlertAcknowledged {
                alert_id: alert_id.into(),
                operator: operator.into(),
                at: tx.now(),
            });
            let mut a = alert.clone();
            a.acknowledged_by = Some(operator.into());
            a.acknowledged_at = Some(tx.now());
            Ok(a)
        })
    }

    /// Alerts, oldest first; `acknowledged` filters by state.
    pub fn alerts(&self, acknowledged: Option<bool>) -> Vec<Alert> {
        let state = self.read();
        let mut out: Vec<Alert> = state
            .alerts()
            .filter(|a| acknowledged.is_none_or(|want| a.acknowledged_by.is_some() == want))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            a.raised_at
                .cmp(&b.raised_at)
                .then_with(|| a.alert_id.cmp(&b.alert_id))
        });
        out
    }

    pub fn get_report(&self, report_id: &str) -> Option<Report> {
        self.read().report(report_id)
    }

    pub fn get_person(&self, person_id: &str) -> Option<PersonRecord> {
        self.read().person(person_id).cloned()
    }

    pub fn get_claim(&self, claim_id: &str) -> Option<Claim> {
        self.read().claim(claim_id).cloned()
    }

    /// Filtered reports, newest first (ties by id), `limit` at a time.
    pub fn list_reports(
        &self,
        filter: &ReportFilter,
        limit: usize,
        after: Option<&str>,
    ) -> Result<ReportPage, RegistryError> {
        if !(1..=MAX_PAGE).contains(&limit) {
            return Err(RegistryError::BadPage(limit));
        }
        let after = after.map(parse_cursor).transpose()?;
        let state = self.read();
        let mut all: Vec<Report> = state
            .items()
            .cloned()
            .map(Report::Item)
            .chain(state.person_reports().cloned().map(Report::Person))
            .filter(|r| filter.admits(r))
            .collect();
        all.sort_by_key(listing_key);
        let start = match &after {
            Some((ms, id)) => {
                let key = (std::cmp::Reverse(*ms), id.clone());
                all.partition_point(|r| listing_key(r) <= key)
            }
            None => 0,
        };
        let reports: Vec<Report> = all.into_iter().skip(start).take(limit + 1).collect();
        let (reports, next) = if reports.len() > limit {
            let mut r = reports;
            r.truncate(limit);
            let next = r.last().map(cursor);
            (r, next)
        } else {
            (reports, None)
        };
        Ok(ReportPage { reports, next })
    }

    /// Runs a query-grammar search, optionally bounded by commit time.
    pub fn search(
        &self,
        query: &str,
        since: Option<DateTime<Utc>>,
        until: Option<DateTime<Utc>>,
        limit: usize,
    ) -> Result<Vec<ScoredReport>, RegistryError> {
        if !(1..=MAX_PAGE).contains(&limit) {
            return Err(RegistryError::BadPage(limit));
        }
        let q = parse_query(query)?.with_dates(
            since.map(|t| t.timestamp_millis()),
            until.map(|t| t.timestamp_millis()),
        )?;
        let state = self.read();
        Ok(state
            .index()
            .search(&q, limit)
            .into_iter()
            .filter_map(|h| {
                state.report(&h.report_id).map(|report| ScoredReport {
                    score: h.score,
                    report,
                })
            })
            .collect())
    }
}

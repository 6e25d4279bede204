use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use mfr_core::lifecycle::{ClaimDecision, ItemStatus, PersonReportStatus};
use mfr_core::search::{Facet, SearchIndex};
use mfr_core::{Embedding, Gallery};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::records::{
    Alert, AlertPayload, Claim, ItemReport, Origin, PersonRecord, PersonReport, Report,
};

/// A state change. Every commit is a list of these, applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    PersonEnrolled {
        person: PersonRecord,
        embeddings: Vec<Embedding>,
    },
    /// Re-embedding after a model change.
    PersonEmbeddingsReplaced {
        person_id: String,
        embeddings: Vec<Embedding>,
    },
    ItemReported {
        report: ItemReport,
    },
    ItemStatusChanged {
        report_id: String,
        from: ItemStatus,
        to: ItemStatus,
    },
    PersonReported {
        report: PersonReport,
    },
    PersonEmbeddingAttached {
        report_id: String,
        embedding: Option<Embedding>,
    },
    PersonStatusChanged {
        report_id: String,
        from: PersonReportStatus,
        to: PersonReportStatus,
        matched_person_id: Option<String>,
    },
    ClaimFiled {
        claim: Claim,
    },
    ClaimDecided {
        claim_id: String,
        decision: ClaimDecision,
        at: DateTime<Utc>,
    },
    AlertRaised {
        alert: Alert,
    },
    AlertAcknowledged {
        alert_id: String,
        operator: String,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("{0} already exists")]
    Exists(String),
    #[error("{0} does not exist")]
    Missing(String),
    #[error("transition {from} -> {to} is not allowed for {id}")]
    Transition {
        id: String,
        from: String,
        to: String,
    },
    #[error("origin {0}/{1} already used")]
    DuplicateOrigin(String, u64),
    #[error("inconsistent event: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonEntry {
    pub record: PersonRecord,
    pub embeddings: Vec<Embedding>,
}

/// The registry contents. Only [`State::apply`] mutates it.
#[derive(Debug, Clone, Default)]
pub struct State {
    pub(crate) persons: BTreeMap<String, PersonEntry>,
    pub(crate) items: BTreeMap<String, ItemReport>,
    pub(crate) person_reports: BTreeMap<String, PersonReport>,
    pub(crate) claims: BTreeMap<String, Claim>,
    pub(crate) alerts: BTreeMap<String, Alert>,
    origins: HashMap<Origin, String>,
    high_water: BTreeMap<String, u64>,
    /// Pending claim per item report.
    active_claims: BTreeMap<String, String>,
    /// (missing report, found report) pairs that already raised an alert.
    alert_pairs: BTreeSet<(String, String)>,
    index: SearchIndex,
}

fn millis(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

impl State {
    pub fn person(&self, id: &str) -> Option<&PersonRecord> {
        self.persons.get(id).map(|p| &p.record)
    }

    pub fn person_embeddings(&self, id: &str) -> Option<&[Embedding]> {
        self.persons.get(id).map(|p| p.embeddings.as_slice())
    }

    pub fn persons(&self) -> impl Iterator<Item = &PersonEntry> {
        self.persons.values()
    }

    pub fn person_count(&self) -> usize {
        self.persons.len()
    }

    pub fn item(&self, id: &str) -> Option<&ItemReport> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemReport> {
        self.items.values()
    }

    pub fn person_report(&self, id: &str) -> Option<&PersonReport> {
        self.person_reports.get(id)
    }

    pub fn person_reports(&self) -> impl Iterator<Item = &PersonReport> {
        self.person_reports.values()
    }

    pub fn report(&self, id: &str) -> Option<Report> {
        self.items
            .get(id)
            .cloned()
            .map(Report::Item)
            .or_else(|| self.person_reports.get(id).cloned().map(Report::Person))
    }

    pub fn report_count(&self) -> usize {
        self.items.len() + self.person_reports.len()
    }

    pub fn claim(&self, id: &str) -> Option<&Claim> {
        self.claims.get(id)
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.claims.values()
    }

    pub fn active_claim(&self, report_id: &str) -> Option<&Claim> {
        self.active_claims
            .get(report_id)
            .and_then(|c| self.claims.get(c))
    }

    pub fn alert(&self, id: &str) -> Option<&Alert> {
        self.alerts.get(id)
    }

    pub fn alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.values()
    }

    pub fn has_alert_pair(&self, missing: &str, found: &str) -> bool {
        self.alert_pairs
            .contains(&(missing.to_string(), found.to_string()))
    }

    pub fn origin_report(&self, origin: &Origin) -> Option<&str> {
        self.origins.get(origin).map(String::as_str)
    }

    pub fn high_water(&self, kiosk_id: &str) -> u64 {
        self.high_water.get(kiosk_id).copied().unwrap_or(0)
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }

    /// Gallery of every person with embeddings from `model_version`.
    pub fn gallery(&self, model_version: u64) -> Gallery {
        let mut g = Gallery::new(model_version);
        for (id, p) in &self.persons {
            let embs: Vec<Embedding> = p
                .embeddings
                .iter()
                .filter(|e| e.model_version == model_version)
                .cloned()
                .collect();
            if embs.len() >= mfr_core::gallery::MIN_ENROLL_CHIPS {
                g = g
                    .enroll_embeddings(id, embs)
                    .expect("filtered embeddings are valid");
            }
        }
        g
    }

    fn register_origin(
        &mut self,
        origin: &Option<Origin>,
        report_id: &str,
    ) -> Result<(), ApplyError> {
        if let Some(o) = origin {
            if self.origins.contains_key(o) {
                return Err(ApplyError::DuplicateOrigin(o.kiosk_id.clone(), o.seq));
            }
            self.origins.insert(o.clone(), report_id.to_string());
            let hw = self.high_water.entry(o.kiosk_id.clone()).or_insert(0);
            *hw = (*hw).max(o.seq);
        }
        Ok(())
    }

    fn report_id_free(&self, id: &str) -> Result<(), ApplyError> {
        if self.items.contains_key(id) || self.person_reports.contains_key(id) {
            Err(ApplyError::Exists(id.to_string()))
        } else {
            Ok(())
        }
    }

    fn index_item(&mut self, r: &ItemReport) {
        self.index
            .index_report(
                &r.report_id,
                &[&r.description, &r.location, r.category.as_str()],
                &[
                    (Facet::Kind, r.kind.as_str()),
                    (Facet::Category, r.category.as_str()),
                    (Facet::Status, r.status.as_str()),
                    (Facet::Location, &r.location),
                ],
                millis(r.reported_at),
            )
            .expect("report ids are unique");
    }

    fn index_person_report(&mut self, r: &PersonReport) {
        self.index
            .index_report(
                &r.report_id,
                &[&r.description, &r.location],
                &[
                    (Facet::Kind, r.kind.as_str()),
                    (Facet::Category, "person"),
                    (Facet::Status, r.status.as_str()),
                    (Facet::Location, &r.location),
                ],
                millis(r.reported_at),
            )
            .expect("report ids are unique");
    }

    /// Applies one event, refusing anything that breaks an invariant.
    pub fn apply(&mut self, event: &Event) -> Result<(), ApplyError> {
        match event {
            Event::PersonEnrolled { person, embeddings } => {
                if self.persons.contains_key(&person.person_id) {
                    return Err(ApplyError::Exists(person.person_id.clone()));
                }
                if person.photo_refs.len() < mfr_core::gallery::MIN_ENROLL_CHIPS {
                    return Err(ApplyError::Inconsistent(
                        "person with fewer than 3 photos".into(),
                    ));
                }
                self.persons.insert(
                    person.person_id.clone(),
                    PersonEntry {
                        record: person.clone(),
                        embeddings: embeddings.clone(),
                    },
                );
            }
            Event::PersonEmbeddingsReplaced {
                person_id,
                embeddings,
            } => {
                let p = self
                    .persons
                    .get_mut(person_id)
                    .ok_or_else(|| ApplyError::Missing(person_id.clone()))?;
                p.embeddings = embeddings.clone();
            }
            Event::ItemReported { report } => {
                self.report_id_free(&report.report_id)?;
                if report.status != ItemStatus::Open {
                    return Err(ApplyError::Inconsistent("new reports start OPEN".into()));
                }
                self.register_origin(&report.origin, &report.report_id)?;
                self.index_item(report);
                self.items.insert(report.report_id.clone(), report.clone());
            }
            Event::ItemStatusChanged {
                report_id,
                from,
                to,
            } => {
                let r = self
                    .items
                    .get_mut(report_id)
                    .ok_or_else(|| ApplyError::Missing(report_id.clone()))?;
                if r.status != *from || !from.can_transition_to(*to) {
                    return Err(ApplyError::Transition {
                        id: report_id.clone(),
                        from: r.status.as_str().into(),
                        to: to.as_str().into(),
                    });
                }
                r.status = *to;
                self.index
                    .set_facet(report_id, Facet::Status, to.as_str())
                    .expect("reports are indexed");
                if *to != ItemStatus::ClaimPending {
                    self.active_claims.remove(report_id);
                }
            }
            Event::PersonReported { report } => {
                self.report_id_free(&report.report_id)?;
                if report.status != PersonReportStatus::Open || report.matched_person_id.is_some() {
                    return Err(ApplyError::Inconsistent(
                        "new reports start OPEN and unmatched".into(),
                    ));
                }
                self.register_origin(&report.origin, &report.report_id)?;
                self.index_person_report(report);
                self.person_reports
                    .insert(report.report_id.clone(), report.clone());
            }
            Event::PersonEmbeddingAttached {
                report_id,
                embedding,
            } => {
                let r = self
                    .person_reports
                    .get_mut(report_id)
                    .ok_or_else(|| ApplyError::Missing(report_id.clone()))?;
                r.embedding = embedding.clone();
            }
            Event::PersonStatusChanged {
                report_id,
                from,
                to,
                matched_person_id,
            } => {
                let r = self
                    .person_reports
                    .get_mut(report_id)
                    .ok_or_else(|| ApplyError::Missing(report_id.clone()))?;
                if r.status != *from || !from.can_transition_to(*to) {
                    return Err(ApplyError::Transition {
                        id: report_id.clone(),
                        from: r.status.as_str().into(),
                        to: to.as_str().into(),
                    });
                }
                if matched_person_id.is_some() != to.carries_match() {
                    return Err(ApplyError::Inconsistent(
                        "matched_person_id must be set exactly for matched statuses".into(),
                    ));
                }
                r.status = *to;
                r.matched_person_id = matched_person_id.clone();
                self.index
                    .set_facet(report_id, Facet::Status, to.as_str())
                    .expect("reports are indexed");
            }
            Event::ClaimFiled { claim } => {
                if self.claims.contains_key(&claim.claim_id) {
                    return Err(ApplyError::Exists(claim.claim_id.clone()));
                }
                let report = self
                    .items
                    .get(&claim.report_id)
                    .ok_or_else(|| ApplyError::Missing(claim.report_id.clone()))?;
                if claim.decision != ClaimDecision::Pending
                    || report.status != ItemStatus::ClaimPending
                    || self.active_claims.contains_key(&claim.report_id)
                {
                    return Err(ApplyError::Inconsistent(
                        "a claim is filed PENDING right after its report moves to CLAIM_PENDING"
                            .into(),
                    ));
                }
                self.active_claims
                    .insert(claim.report_id.clone(), claim.claim_id.clone());
                self.claims.insert(claim.claim_id.clone(), claim.clone());
            }
            Event::ClaimDecided {
                claim_id,
                decision,
                at,
            } => {
                let c = self
                    .claims
                    .get_mut(claim_id)
                    .ok_or_else(|| ApplyError::Missing(claim_id.clone()))?;
                if !c.decision.can_transition_to(*decision) {
                    return Err(ApplyError::Transition {
                        id: claim_id.clone(),
                        from: c.decision.as_str().into(),
                        to: decision.as_str().into(),
                    });
                }
                c.decision = *decision;
                c.decided_at = Some(*at);
                if !decision.is_active() && self.active_claims.get(&c.report_id) == Some(claim_id) {
                    self.active_claims.remove(&c.report_id);
                }
            }
            Event::AlertRaised { alert } => {
                if self.alerts.contains_key(&alert.alert_id) {
                    return Err(ApplyError::Exists(alert.alert_id.clone()));
                }
                if let AlertPayload::PersonMatch {
                    missing_report_id,
                    found_report_id,
                    ..
                } = &alert.payload
                {
                    if !self
                        .alert_pairs
                        .insert((missing_report_id.clone(), found_report_id.clone()))
                    {
                        return Err(ApplyError::Exists(format!(
                            "alert for pair {missing_report_id}/{found_report_id}"
                        )));
                    }
                }
                self.alerts.insert(alert.alert_id.clone(), alert.clone());
            }
            Event::AlertAcknowledged {
                alert_id,
                operator,
                at,
            } => {
                let a = self
                    .alerts
                    .get_mut(alert_id)
                    .ok_or_else(|| ApplyError::Missing(alert_id.clone()))?;
                if a.acknowledged_by.is_some() {
                    return Err(ApplyError::Inconsistent(format!(
                        "{alert_id} is already acknowledged"
                    )));
                }
                a.acknowledged_by = Some(operator.clone());
                a.acknowledged_at = Some(*at);
            }
        }
        Ok(())
    }

    /// Every entity as snapshot records, in a deterministic order.
    pub fn entities(&self) -> Vec<Entity> {
        let mut out = Vec::new();
        out.extend(self.persons.values().cloned().map(Entity::Person));
        out.extend(self.items.values().cloned().map(Entity::Item));
        out.extend(
            self.person_reports
                .values()
                .cloned()
                .map(Entity::PersonReport),
        );
        out.extend(self.claims.values().cloned().map(Entity::Claim));
        out.extend(self.alerts.values().cloned().map(Entity::Alert));
        out
    }

    /// Rebuilds a state from snapshot records.
    pub fn from_entities(entities: impl IntoIterator<Item = Entity>) -> Result<Self, ApplyError> {
        let mut s = State::default();
        let mut claims = Vec::new();
        for e in entities {
            match e {
                Entity::Person(p) => {
                    if s.persons.insert(p.record.person_id.clone(), p).is_some() {
                        return Err(ApplyError::Inconsistent("duplicate person".into()));
                    }
                }
                Entity::Item(r) => {
                    s.report_id_free(&r.report_id)?;
                    s.register_origin(&r.origin, &r.report_id)?;
                    s.index_item(&r);
                    s.items.insert(r.report_id.clone(), r);
                }
                Entity::PersonReport(r) => {
                    s.report_id_free(&r.report_id)?;
                    s.register_origin(&r.origin, &r.report_id)?;
                    s.index_person_report(&r);
                    s.person_reports.insert(r.report_id.clone(), r);
                }
                Entity::Claim(c) => claims.push(c),
                Entity::Alert(a) => {
                    if let AlertPayload::PersonMatch {
                        missing_report_id,
                        found_report_id,
                        ..
                    } = &a.payload
                    {
                        s.alert_pairs
                            .insert((missing_report_id.clone(), found_report_id.clone()));
                    }
                    s.alerts.insert(a.alert_id.clone(), a);
                }
            }
        }
        for c in claims {
            if c.decision == ClaimDecision::Pending
                && s.active_claims
                    .insert(c.report_id.clone(), c.claim_id.clone())
                    .is_some()
            {
                return Err(ApplyError::Inconsistent(
                    "two pending claims on one report".into(),
                ));
            }
            s.claims.insert(c.claim_id.clone(), c);
        }
        Ok(s)
    }
}

/// One snapshot record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entity", rename_all = "snake_case")]
pub enum Entity {
    Person(PersonEntry),
    Item(ItemReport),
    PersonReport(PersonReport),
    Claim(Claim),
    Alert(Alert),
}

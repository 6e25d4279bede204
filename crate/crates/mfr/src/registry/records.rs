use chrono::{DateTime, Utc};
use mfr_core::lifecycle::{ClaimDecision, ItemStatus, PersonReportStatus};
use mfr_core::Embedding;
use serde::{Deserialize, Serialize};

pub const MAX_TEXT_LEN: usize = 4000;
pub const MAX_SHORT_TEXT_LEN: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub kiosk_id: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub full_name: String,
    pub nationality: String,
    pub group_id: Option<String>,
    pub enrolled_at: DateTime<Utc>,
    pub photo_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemKind {
    Found,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Watch,
    Phone,
    Bag,
    Document,
    Jewelry,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PersonKind {
    Missing,
    FoundAlive,
    Deceased,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Found => "FOUND",
            Self::Lost => "LOST",
        }
    }
}

impl Category {
    pub const ALL: [Category; 6] = [
        Self::Watch,
        Self::Phone,
        Self::Bag,
        Self::Document,
        Self::Jewelry,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Watch => "watch",
            Self::Phone => "phone",
            Self::Bag => "bag",
            Self::Document => "document",
            Self::Jewelry => "jewelry",
            Self::Other => "other",
        }
    }
}

impl PersonKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Missing => "MISSING",
            Self::FoundAlive => "FOUND_ALIVE",
            Self::Deceased => "DECEASED",
        }
    }

    pub fn is_found(self) -> bool {
        !matches!(self, Self::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub report_id: String,
    pub kind: ItemKind,
    pub category: Category,
    pub description: String,
    pub location: String,
    /// Server commit time.
    pub reported_at: DateTime<Utc>,
    /// Time stated by the reporting client, kept apart from `reported_at`.
    pub claimed_time: Option<DateTime<Utc>>,
    pub photo_ref: Option<String>,
    pub status: ItemStatus,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonReport {
    pub report_id: String,
    pub kind: PersonKind,
    pub description: String,
    /// The enrolled person a MISSING report is about.
    pub subject_person_id: Option<String>,
    pub photo_ref: String,
    pub embedding: Option<Embedding>,
    pub location: String,
    pub reported_at: DateTime<Utc>,
    pub claimed_time: Option<DateTime<Utc>>,
    pub status: PersonReportStatus,
    pub matched_person_id: Option<String>,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub report_id: String,
    pub claimant_name: String,
    pub evidence_text: String,
    pub evidence_photo_ref: Option<String>,
    pub filed_at: DateTime<Utc>,
    pub decision: ClaimDecision,
    pub decided_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertPayload {
    PersonMatch {
        missing_report_id: String,
        found_report_id: String,
        person_id: String,
        distance: f64,
    },
    ClaimFiled {
        report_id: String,
        claim_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    #[serde(flatten)]
    pub payload: AlertPayload,
    pub raised_at: DateTime<Utc>,
    pub acknowledged_by: Option<String>,
    pub acknowledged_at: Option<DateTime<Utc>>,
}

/// Either kind of report, as returned by listings and search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum Report {
    Item(ItemReport),
    Person(PersonReport),
}

impl Report {
    pub fn report_id(&self) -> &str {
        match self {
            Self::Item(r) => &r.report_id,
            Self::Person(r) => &r.report_id,
        }
    }

    pub fn reported_at(&self) -> DateTime<Utc> {
        match self {
            Self::Item(r) => r.reported_at,
            Self::Person(r) => r.reported_at,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Self::Item(r) => r.kind.as_str(),
            Self::Person(r) => r.kind.as_str(),
        }
    }

    pub fn status_str(&self) -> &'static str {
        match self {
            Self::Item(r) => r.status.as_str(),
            Self::Person(r) => r.status.as_str(),
        }
    }
}

/// Client-supplied fields of an item report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDraft {
    pub kind: ItemKind,
    pub category: Category,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub claimed_time: Option<DateTime<Utc>>,
}

/// Client-supplied fields of a person report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonDraft {
    pub kind: PersonKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub subject_person_id: Option<String>,
    #[serde(default)]
    pub claimed_time: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimDraft {
    pub claimant_name: String,
    #[serde(default)]
    pub evidence_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollDraft {
    pub full_name: String,
    #[serde(default)]
    pub nationality: String,
    #[serde(default)]
    pub group_id: Option<String>,
}

fn check_len(field: &str, value: &str, max: usize) -> Result<(), String> {
    if value.chars().count() > max {
        Err(format!("{field} exceeds {max} characters"))
    } else {
        Ok(())
    }
}

impl ItemDraft {
    /// A report must carry a description or a photo.
    pub fn validate(&self, has_photo: bool) -> Result<(), String> {
        if self.description.trim().is_empty() && !has_photo {
            return Err("a report needs a description or a photo".into());
        }
        check_len("description", &self.description, MAX_TEXT_LEN)?;
        check_len("location", &self.location, MAX_SHORT_TEXT_LEN)
    }
}

impl PersonDraft {
    pub fn validate(&self, has_photo: bool) -> Result<(), String> {
        if !has_photo {
            return Err("a person report needs a photo".into());
        }
        if self.kind == PersonKind::Missing && self.subject_person_id.is_none() {
            return Err("a MISSING report must name the enrolled person".into());
        }
        check_len("description", &self.description, MAX_TEXT_LEN)?;
        check_len("location", &self.location, MAX_SHORT_TEXT_LEN)
    }
}

impl EnrollDraft {
    pub fn validate(&self) -> Result<(), String> {
        if self.full_name.trim().is_empty() {
            return Err("full_name must not be empty".into());
        }
        check_len("full_name", &self.full_name, MAX_SHORT_TEXT_LEN)?;
        check_len("nationality", &self.nationality, MAX_SHORT_TEXT_LEN)?;
        if let Some(g) = &self.group_id {
            check_len("group_id", g, MAX_SHORT_TEXT_LEN)?;
        }
        Ok(())
    }
}

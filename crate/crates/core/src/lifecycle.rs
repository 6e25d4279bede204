//! Status graphs for reports and claims.
//!
//! Item reports:
//!
//! ```text
//! OPEN ──file claim──▶ CLAIM_PENDING ──accept──▶ RESOLVED
//!  ▲  │                   │
//!  │  │                   └──reject──▶ REJECTED
//!  │  └──reject──────────────────────▶ REJECTED
//!  └────────deny──────────┘
//! ```
//!
//! RESOLVED and REJECTED are terminal. Person reports move OPEN →
//! MATCH_PROPOSED → CONFIRMED → CLOSED, with MATCH_PROPOSED → OPEN when a
//! proposed match is turned down and OPEN → CLOSED for reports withdrawn
//! without a match.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum ItemStatus {
    Open,
    ClaimPending,
    Resolved,
    Rejected,
}

impl ItemStatus {
    pub const ALL: [ItemStatus; 4] = [
        Self::Open,
        Self::ClaimPending,
        Self::Resolved,
        Self::Rejected,
    ];

    pub fn can_transition_to(self, next: ItemStatus) -> bool {
        use ItemStatus::*;
        matches!(
            (self, next),
            (Open, ClaimPending)
                | (Open, Rejected)
                | (ClaimPending, Open)
                | (ClaimPending, Resolved)
                | (ClaimPending, Rejected)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Resolved | Self::Rejected)
    }

    pub fn is_claimable(self) -> bool {
        self == Self::Open
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Open => "OPEN",
            Self::ClaimPending => "CLAIM_PENDING",
            Self::Resolved => "RESOLVED",
            Self::Rejected => "REJECTED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum PersonReportStatus {
    Open,
    MatchProposed,
    Confirmed,
    Closed,
}

impl PersonReportStatus {
    pub const ALL: [PersonReportStatus; 4] = [
        Self::Open,
        Self::MatchProposed,
        Self::Confirmed,
        Self::Closed,
    ];

    pub fn can_transition_to(self, next: PersonReportStatus) -> bool {
        use PersonReportStatus::*;
        matches!(
            (self, next),
            (Open, MatchProposed)
                | (Open, Closed)
                | (MatchProposed, Confirmed)
                | (MatchProposed, Open)
                | (Confirmed, Closed)
        )
    }

    /// Whether a matched person id must be present in this status.
    pub fn carries_match(self) -> bool {
        matches!(self, Self::MatchProposed | Self::Confirmed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Open => "OPEN",
            Self::MatchProposed => "MATCH_PROPOSED",
            Self::Confirmed => "CONFIRMED",
            Self::Closed => "CLOSED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum ClaimDecision {
    Pending,
    Accepted,
    Denied,
}

impl ClaimDecision {
    pub fn can_transition_to(self, next: ClaimDecision) -> bool {
        self == Self::Pending && next != Self::Pending
    }

    /// Pending and accepted claims block further claims on the same report.
    pub fn is_active(self) -> bool {
        self != Self::Denied
    }

    /// Item status that follows a decision on its pending claim.
    pub fn item_outcome(self) -> ItemStatus {
        match self {
            Self::Pending => ItemStatus::ClaimPending,
            Self::Accepted => ItemStatus::Resolved,
            Self::Denied => ItemStatus::Open,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pending => "PENDING",
            Self::Accepted => "ACCEPTED",
            Self::Denied => "DENIED",
        }
    }
}

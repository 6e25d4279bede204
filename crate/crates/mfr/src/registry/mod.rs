//! Durable registry of persons, reports, claims and alerts.
//!
//! State changes are events appended to a CRC-checked log (one record per
//! commit) and periodically folded into a snapshot. The in-memory state,
//! including the search index, is rebuilt from both on open.

mod ops;
mod records;
mod state;
mod store;

pub use ops::{
    PersonAction, RegistryError, ReportFilter, ReportPage, ScoredReport, Submission, MAX_PAGE,
};
pub use records::*;
pub use state::{ApplyError, Entity, Event, PersonEntry, State};
pub use store::{
    derived_id, Clock, Commit, IdSource, Recovery, StepClock, Store, StoreError, StoreOptions,
    SystemClock, Tx, DEFAULT_SNAPSHOT_EVERY,
};

//! Report search: tokenizer, query grammar and a positional inverted index.
//!
//! Query grammar (whitespace separated):
//!
//! ```text
//! query  := (filter | phrase | term)+
//! filter := field ":" value          field ∈ {kind, category, status, location}
//! phrase := '"' term+ '"'
//! ```
//!
//! `field:"a b"` quotes a multi-word filter value. A `x:y` word whose field is
//! not recognised is read as the plain terms of `x:y`.

mod index;
mod query;
mod tokenize;

pub use index::{Posting, SearchHit, SearchIndex};
pub use query::{parse_query, Facet, QueryError, SearchQuery};
pub use tokenize::{normalize_facet, tokenize};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("document {0:?} is already indexed")]
    DuplicateDocument(alloc::string::String),
    #[error("document {0:?} is not indexed")]
    NotIndexed(alloc::string::String),
}

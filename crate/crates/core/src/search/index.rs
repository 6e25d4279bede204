use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::query::{Facet, SearchQuery};
use super::tokenize::{normalize_facet, tokenize};
use super::IndexError;

/// Occurrences of one term in one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    /// Strictly ascending token positions; `tf` is their count.
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn tf(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchHit {
    pub report_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Document {
    terms: BTreeSet<String>,
    facets: BTreeMap<Facet, String>,
    timestamp: i64,
}

/// Inverted index over report text with exact-match facets and a timestamp.
///
/// Ranking is `Σ tf · ln(1 + N / df)` over the distinct query terms (free terms
/// and phrase terms) present in the document, summed in lexicographic term
/// order. Ties go to the smaller report id.
#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    postings: BTreeMap<String, BTreeMap<String, Posting>>,
    docs: BTreeMap<String, Document>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, report_id: &str) -> bool {
        self.docs.contains_key(report_id)
    }

    /// Document frequency of `term`.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeMap::len)
    }

    pub fn posting(&self, term: &str, report_id: &str) -> Option<&Posting> {
        self.postings.get(term)?.get(report_id)
    }

    /// Indexes the given text fields in order. Positions skip one slot between
    /// fields so phrases never span two fields.
    pub fn index_report(
        &mut self,
        report_id: &str,
        text_fields: &[&str],
        facets: &[(Facet, &str)],
        timestamp: i64,
    ) -> Result<(), IndexError> {
        if self.docs.contains_key(report_id) {
            return Err(IndexError::DuplicateDocument(report_id.to_string()));
        }
        let mut pos: u32 = 0;
        let mut terms = BTreeSet::new();
        for field in text_fields {
            for token in tokenize(field) {
                self.postings
                    .entry(token.clone())
                    .or_default()
                    .entry(report_id.to_string())
                    .or_insert_with(|| Posting {
                        positions: Vec::new(),
                    })
                    .positions
                    .push(pos);
                terms.insert(token);
                pos += 1;
            }
            pos += 1;
        }
        let facets = facets
            .iter()
            .map(|(f, v)| (*f, normalize_facet(v)))
            .collect();
        self.docs.insert(
            report_id.to_string(),
            Document {
                terms,
                facets,
                timestamp,
            },
        );
        Ok(())
    }

    pub fn remove_report(&mut self, report_id: &str) -> Result<(), IndexError> {
        let doc = self
            .docs
            .remove(report_id)
            .ok_or_else(|| IndexError::NotIndexed(report_id.to_string()))?;
        for term in &doc.terms {
            if let Some(list) = self.postings.get_mut(term) {
                list.remove(report_id);
                if list.is_empty() {
                    self.postings.remove(term);
                }
            }
        }
        Ok(())
    }

    /// Replaces the facets of an indexed document, e.g. after a status change.
    pub fn set_facet(
        &mut self,
        report_id: &str,
        facet: Facet,
        value: &str,
    ) -> Result<(), IndexError> {
        let doc = self
            .docs
            .get_mut(report_id)
            .ok_or_else(|| IndexError::NotIndexed(report_id.to_string()))?;
        doc.facets.insert(facet, normalize_facet(value));
        Ok(())
    }

    pub fn search(&self, query: &SearchQuery, limit: usize) -> Vec<SearchHit> {
        if limit == 0 || query.is_empty() {
            return Vec::new();
        }
        if let (Some(f), Some(t)) = (query.date_from, query.date_to) {
            if f > t {
                return Vec::new();
            }
        }

        let candidates: BTreeSet<&str> = if !query.terms.is_empty() {
            query
                .terms
                .iter()
                .filter_map(|t| self.postings.get(t))
                .flat_map(|list| list.keys().map(String::as_str))
                .collect()
        } else if let Some(first) = query.phrases.first() {
            self.postings
                .get(&first[0])
                .map(|list| list.keys().map(String::as_str).collect())
                .unwrap_or_default()
        } else {
            self.docs.keys().map(String::as_str).collect()
        };

        let scoring: BTreeSet<&str> = query
            .terms
            .iter()
            .chain(query.phrases.iter().flatten())
            .map(String::as_str)
            .collect();
        let n = self.docs.len() as f64;

        let mut hits: Vec<SearchHit> = candidates
            .into_iter()
            .filter(|id| self.admits(id, query))
            .map(|id| {
                let mut score = 0.0;
                for term in &scoring {
                    if let Some(list) = self.postings.get(*term) {
                        if let Some(p) = list.get(id) {
                            let idf = libm::log(1.0 + n / list.len() as f64);
                            score += p.tf() as f64 * idf;
                        }
                    }
                }
                SearchHit {
                    report_id: id.to_string(),
                    score,
                }
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.report_id.cmp(&b.report_id))
        });
        hits.truncate(limit);
        hits
    }

    fn admits(&self, id: &str, query: &SearchQuery) -> bool {
        let Some(doc) = self.docs.get(id) else {
            return false;
        };
        if query.date_from.is_some_and(|f| doc.timestamp < f)
            || query.date_to.is_some_and(|t| doc.timestamp > t)
        {
            return false;
        }
        if !query
            .filters
            .iter()
            .all(|(facet, want)| doc.facets.get(facet) == Some(want))
        {
            return false;
        }
        query.phrases.iter().all(|p| self.phrase_at(id, p))
    }

    fn phrase_at(&self, id: &str, phrase: &[String]) -> bool {
        let lists: Option<Vec<&Posting>> = phrase.iter().map(|t| self.posting(t, id)).collect();
        let Some(lists) = lists else {
            return false;
        };
        lists[0].positions.iter().any(|&start| {
            lists[1..]
                .iter()
                .enumerate()
                .all(|(i, p)| p.positions.binary_search(&(start + i as u32 + 1)).is_ok())
        })
    }
}

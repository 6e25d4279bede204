use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::tokenize::{normalize_facet, tokenize};

/// Filterable report attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Facet {
    Kind,
    Category,
    Status,
    Location,
}

impl Facet {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "kind" => Some(Self::Kind),
            "category" => Some(Self::Category),
            "status" => Some(Self::Status),
            "location" => Some(Self::Location),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unbalanced quote")]
    UnbalancedQuote,
    #[error("date range is inverted")]
    InvertedDateRange,
}

/// A parsed search request. Timestamps are Unix milliseconds, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchQuery {
    pub terms: Vec<String>,
    pub phrases: Vec<Vec<String>>,
    /// Normalized with [`normalize_facet`].
    pub filters: BTreeMap<Facet, String>,
    pub date_from: Option<i64>,
    pub date_to: Option<i64>,
}

impl SearchQuery {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.phrases.is_empty() && self.filters.is_empty()
    }

    pub fn with_filter(mut self, facet: Facet, value: &str) -> Self {
        self.filters.insert(facet, normalize_facet(value));
        self
    }

    pub fn with_dates(mut self, from: Option<i64>, to: Option<i64>) -> Result<Self, QueryError> {
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(QueryError::InvertedDateRange);
            }
        }
        self.date_from = from;
        self.date_to = to;
        Ok(self)
    }
}

/// Parses the query grammar. A repeated filter field keeps its last value.
pub fn parse_query(text: &str) -> Result<SearchQuery, QueryError> {
    let mut q = SearchQuery::default();
    let mut rest = text;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        if let Some(after) = rest.strip_prefix('"') {
            let (inner, tail) = quoted(after)?;
            let tokens = tokenize(inner);
            if !tokens.is_empty() {
                q.phrases.push(tokens);
            }
            rest = tail;
            continue;
        }
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '"')
            .unwrap_or(rest.len());
        let word = &rest[..end];
        rest = &rest[end..];

        if let Some((field, value)) = word.split_once(':') {
            if let Some(facet) = Facet::parse(&field.to_lowercase()) {
                let raw = if value.is_empty() && rest.starts_with('"') {
                    let (inner, tail) = quoted(&rest[1..])?;
                    rest = tail;
                    inner
                } else {
                    value
                };
                let normalized = normalize_facet(raw);
                if !normalized.is_empty() {
                    q.filters.insert(facet, normalized);
                    continue;
                }
            }
        }
        q.terms.extend(tokenize(word));
    }
    if q.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    Ok(q)
}

/// Splits `s` (just past an opening quote) at its closing quote.
fn quoted(s: &str) -> Result<(&str, &str), QueryError> {
    let close = s.find('"').ok_or(QueryError::UnbalancedQuote)?;
    Ok((&s[..close], &s[close + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn filter_and_term() {
        let q = parse_query("category:watch gate").unwrap();
        assert_eq!(q.terms, s(&["gate"]));
        assert_eq!(q.filters.get(&Facet::Category).unwrap(), "watch");
    }

    #[test]
    fn phrase_and_filter() {
        let q = parse_query("\"black casio\" status:open").unwrap();
        assert_eq!(q.phrases, vec![s(&["black", "casio"])]);
        assert_eq!(q.filters.get(&Facet::Status).unwrap(), "open");
        assert!(q.terms.is_empty());
    }

    #[test]
    fn unclosed_quote() {
        assert_eq!(parse_query("\"unclosed"), Err(QueryError::UnbalancedQuote));
        assert_eq!(
            parse_query("location:\"gate 5"),
            Err(QueryError::UnbalancedQuote)
        );
    }

    #[test]
    fn unknown_field_degrades_to_terms() {
        let q = parse_query("color:red").unwrap();
        assert_eq!(q.terms, s(&["color", "red"]));
        assert!(q.filters.is_empty());
    }

    #[test]
    fn quoted_filter_value() {
        let q = parse_query("location:\"Gate 5\" phone").unwrap();
        assert_eq!(q.filters.get(&Facet::Location).unwrap(), "gate 5");
        assert_eq!(q.terms, s(&["phone"]));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(parse_query(""), Err(QueryError::EmptyQuery));
        assert_eq!(parse_query("   "), Err(QueryError::EmptyQuery));
        assert_eq!(parse_query("a , ;"), Err(QueryError::EmptyQuery));
        assert_eq!(parse_query("\"\""), Err(QueryError::EmptyQuery));
    }

    #[test]
    fn field_names_are_case_insensitive() {
        let q = parse_query("Kind:FOUND").unwrap();
        assert_eq!(q.filters.get(&Facet::Kind).unwrap(), "found");
    }

    #[test]
    fn inverted_dates_rejected() {
        let q = parse_query("bag").unwrap();
        assert_eq!(
            q.clone().with_dates(Some(5), Some(4)),
            Err(QueryError::InvertedDateRange)
        );
        assert!(q.with_dates(Some(4), Some(4)).is_ok());
    }
}

//! Linear-scan search: re-tokenizes every document on every query.

use std::collections::{BTreeMap, BTreeSet};

use mfr_core::search::{normalize_facet, tokenize, Facet, SearchHit, SearchQuery};
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Doc {
    pub id: String,
    pub fields: Vec<String>,
    pub facets: Vec<(Facet, String)>,
    pub timestamp: i64,
}

impl Doc {
    fn field_tokens(&self) -> Vec<Vec<String>> {
        self.fields.iter().map(|f| tokenize(f)).collect()
    }

    fn count(&self, term: &str) -> usize {
        self.field_tokens()
            .iter()
            .flatten()
            .filter(|t| *t == term)
            .count()
    }

    fn has_phrase(&self, phrase: &[String]) -> bool {
        self.field_tokens()
            .iter()
            .any(|toks| toks.windows(phrase.len()).any(|win| win == phrase))
    }

    fn facet(&self, facet: Facet) -> Option<String> {
        self.facets
            .iter()
            .rfind(|(f, _)| *f == facet)
            .map(|(_, v)| normalize_facet(v))
    }
}

pub fn linear_search(docs: &[Doc], query: &SearchQuery, limit: usize) -> Vec<SearchHit> {
    if limit == 0 || query.is_empty() {
        return Vec::new();
    }
    let n = docs.len() as f64;
    let scoring: BTreeSet<&String> = query
        .terms
        .iter()
        .chain(query.phrases.iter().flatten())
        .collect();
    let df: BTreeMap<&String, usize> = scoring
        .iter()
        .map(|t| (*t, docs.iter().filter(|d| d.count(t) > 0).count()))
        .collect();

    let mut hits = Vec::new();
    for doc in docs {
        if !query.terms.is_empty() && query.terms.iter().all(|t| doc.count(t) == 0) {
            continue;
        }
        if !query.phrases.iter().all(|p| doc.has_phrase(p)) {
            continue;
        }
        if query
            .filters
            .iter()
            .any(|(f, v)| doc.facet(*f).as_ref() != Some(v))
        {
            continue;
        }
        if query.date_from.is_some_and(|f| doc.timestamp < f)
            || query.date_to.is_some_and(|t| doc.timestamp > t)
        {
            continue;
        }
        let mut score = 0.0;
        for t in &scoring {
            let tf = doc.count(t);
            if tf > 0 {
                score += tf as f64 * (1.0 + n / df[t] as f64).ln();
            }
        }
        hits.push(SearchHit {
            report_id: doc.id.clone(),
            score,
        });
    }
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.report_id.cmp(&b.report_id))
    });
    hits.truncate(limit);
    hits
}

pub const WORDS: &[&str] = &[
    "black",
    "white",
    "blue",
    "red",
    "green",
    "silver",
    "gold",
    "leather",
    "small",
    "large",
    "watch",
    "phone",
    "bag",
    "wallet",
    "passport",
    "document",
    "ring",
    "necklace",
    "bracelet",
    "keys",
    "casio",
    "samsung",
    "iphone",
    "rolex",
    "strap",
    "case",
    "card",
    "cash",
    "ihram",
    "sandal",
    "found",
    "near",
    "gate",
    "camp",
    "bridge",
    "tent",
    "clinic",
    "station",
    "mosque",
    "street",
    "ساعة",
    "حقيبة",
    "هاتف",
    "Été",
    "Ḥaram",
    "mina",
    "arafat",
    "jamarat",
    "muzdalifah",
    "zamzam",
    "5",
    "12",
    "7",
    "2024",
    "a",
    "x",
    "of",
    "the",
    "with",
    "and",
];

const KINDS: &[&str] = &["FOUND", "LOST", "MISSING", "FOUND_ALIVE", "DECEASED"];
const CATEGORIES: &[&str] = &["watch", "phone", "bag", "document", "jewelry", "other"];
const STATUSES: &[&str] = &[
    "OPEN",
    "CLAIM_PENDING",
    "RESOLVED",
    "REJECTED",
    "MATCH_PROPOSED",
];
const LOCATIONS: &[&str] = &[
    "Gate 5",
    "Gate A",
    "Mina Camp 12",
    "Jamarat Bridge",
    "King Fahd Gate",
    "Clinic 3",
];

fn phrase<R: Rng>(rng: &mut R, len: usize) -> String {
    let mut out = Vec::new();
    for _ in 0..len {
        let mut w = WORDS.choose(rng).unwrap().to_string();
        if rng.random_bool(0.2) {
            w = w.to_uppercase();
        }
        out.push(w);
    }
    let sep = [" ", " ", ", ", "-", " / "];
    let mut s = String::new();
    for (i, w) in out.iter().enumerate() {
        if i > 0 {
            s.push_str(sep.choose(rng).unwrap());
        }
        s.push_str(w);
    }
    s
}

pub fn random_doc<R: Rng>(rng: &mut R, id: usize) -> Doc {
    let len = rng.random_range(0..12);
    let description = phrase(rng, len);
    let location = LOCATIONS.choose(rng).unwrap().to_string();
    let mut fields = vec![description, location.clone()];
    if rng.random_bool(0.3) {
        fields.push(phrase(rng, 3));
    }
    Doc {
        id: format!("r{:05}", id),
        fields,
        facets: vec![
            (Facet::Kind, KINDS.choose(rng).unwrap().to_string()),
            (Facet::Category, CATEGORIES.choose(rng).unwrap().to_string()),
            (Facet::Status, STATUSES.choose(rng).unwrap().to_string()),
            (Facet::Location, location),
        ],
        timestamp: rng.random_range(0..1_000),
    }
}

/// A query string over the grammar; roughly half the phrases are lifted from
/// `docs` so they actually match something.
pub fn random_query<R: Rng>(rng: &mut R, docs: &[Doc]) -> String {
    let mut parts = Vec::new();
    let n = rng.random_range(1..=4);
    for _ in 0..n {
        match rng.random_range(0..10) {
            0..=3 => parts.push(WORDS.choose(rng).unwrap().to_string()),
            4 | 5 => {
                let lifted = docs.choose(rng).and_then(|d| {
                    let toks = tokenize(&d.fields[0]);
                    (toks.len() >= 2 && rng.random_bool(0.6)).then(|| {
                        let len = rng.random_range(2..=toks.len().min(3));
                        let start = rng.random_range(0..=toks.len() - len);
                        toks[start..start + len].join(" ")
                    })
                });
                let text = match lifted {
                    Some(t) => t,
                    None => {
                        let len = rng.random_range(1..=3);
                        phrase(rng, len)
                    }
                };
                parts.push(format!("\"{text}\""));
            }
            6 => parts.push(format!(
                "kind:{}",
                KINDS.choose(rng).unwrap().to_lowercase()
            )),
            7 => parts.push(format!("category:{}", CATEGORIES.choose(rng).unwrap())),
            8 => {
                let status = STATUSES.choose(rng).unwrap();
                if rng.random_bool(0.5) {
                    parts.push(format!("status:{status}"));
                } else {
                    parts.push(format!("Status:{}", status.to_lowercase()));
                }
            }
            _ => match rng.random_range(0..3) {
                0 => parts.push(format!("location:\"{}\"", LOCATIONS.choose(rng).unwrap())),
                1 => parts.push(format!("color:{}", WORDS.choose(rng).unwrap())),
                _ => parts.push("location:".to_string()),
            },
        }
    }
    parts.join(" ")
}

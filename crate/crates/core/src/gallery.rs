//! Enrolled embeddings and nearest-person identification.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::eigen::EigenModel;
use crate::error::RecognitionError;

/// Minimum face images per enrolled person.
pub const MIN_ENROLL_CHIPS: usize = 3;

/// Coordinates of a face in a particular model's basis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Embedding {
    pub coords: Vec<f64>,
    pub model_version: u64,
}

impl Embedding {
    pub fn new(coords: Vec<f64>, model_version: u64) -> Self {
        Self {
            coords,
            model_version,
        }
    }
}

/// Euclidean distance between two embeddings of the same model.
pub fn distance(a: &Embedding, b: &Embedding) -> Result<f64, RecognitionError> {
    if a.model_version != b.model_version {
        return Err(RecognitionError::ModelVersionMismatch {
            expected: a.model_version,
            actual: b.model_version,
        });
    }
    if a.coords.len() != b.coords.len() {
        return Err(RecognitionError::DimensionMismatch {
            expected: a.coords.len(),
            actual: b.coords.len(),
        });
    }
    Ok(libm::sqrt(squared(&a.coords, &b.coords)))
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchResult {
    pub person_id: String,
    pub distance: f64,
    /// 1-based.
    pub rank: usize,
}

/// Person id to enrolled embeddings, all from one model version.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    entries: BTreeMap<String, Vec<Embedding>>,
    model_version: u64,
}

impl Gallery {
    pub fn new(model_version: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            model_version,
        }
    }

    pub fn model_version(&self) -> u64 {
        self.model_version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, person_id: &str) -> bool {
        self.entries.contains_key(person_id)
    }

    pub fn embeddings(&self, person_id: &str) -> Option<&[Embedding]> {
        self.entries.get(person_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Embedding])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Embeds `chips` with `model` and stores them under `person_id`.
    pub fn enroll<S: AsRef<[f64]>>(
        self,
        person_id: &str,
        chips: &[S],
        model: &EigenModel,
    ) -> Result<Self, RecognitionError> {
        if model.version() != self.model_version {
            return Err(RecognitionError::ModelVersionMismatch {
                expected: self.model_version,
                actual: model.version(),
            });
        }
        if chips.len() < MIN_ENROLL_CHIPS {
            return Err(RecognitionError::InsufficientGallery(chips.len()));
        }
        let embeddings = chips
            .iter()
            .map(|c| model.embed(c.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        self.enroll_embeddings(person_id, embeddings)
    }

    /// Stores precomputed embeddings under `person_id`.
    pub fn enroll_embeddings(
        mut self,
        person_id: &str,
        embeddings: Vec<Embedding>,
    ) -> Result<Self, RecognitionError> {
        if embeddings.len() < MIN_ENROLL_CHIPS {
            return Err(RecognitionError::InsufficientGallery(embeddings.len()));
        }
        if let Some(e) = embeddings
            .iter()
            .find(|e| e.model_version != self.model_version)
        {
            return Err(RecognitionError::ModelVersionMismatch {
                expected: self.model_version,
                actual: e.model_version,
            });
        }
        if self.entries.contains_key(person_id) {
            return Err(RecognitionError::DuplicatePerson(person_id.to_string()));
        }
        self.entries.insert(person_id.to_string(), embeddings);
        Ok(self)
    }

    /// Distance from `probe` to the closest embedding of each person.
    pub fn person_distances(
        &self,
        probe: &Embedding,
    ) -> Result<Vec<(String, f64)>, RecognitionError> {
        if probe.model_version != self.model_version {
            return Err(RecognitionError::ModelVersionMismatch {
                expected: self.model_version,
                actual: probe.model_version,
            });
        }
        let mut out = Vec::with_capacity(self.entries.len());
        for (id, embs) in &self.entries {
            let mut best = f64::INFINITY;
            for e in embs {
                best = best.min(distance(probe, e)?);
            }
            out.push((id.clone(), best));
        }
        Ok(out)
    }

    /// Persons within `threshold` of `probe`, nearest first (ties by id),
    /// truncated to `top_n`. An empty result claims no identity.
    pub fn identify(
        &self,
        probe: &Embedding,
        top_n: usize,
        threshold: f64,
    ) -> Result<Vec<MatchResult>, RecognitionError> {
        if top_n == 0 {
            return Err(RecognitionError::InvalidArgument(
                "top_n must be at least 1",
            ));
        }
        if !(threshold > 0.0) {
            return Err(RecognitionError::InvalidArgument(
                "threshold must be positive",
            ));
        }
        if self.entries.is_empty() {
            return Err(RecognitionError::EmptyGallery);
        }
        if probe.coords.is_empty() {
            return Err(RecognitionError::DegenerateModel);
        }
        let mut hits: Vec<(String, f64)> = self
            .person_distances(probe)?
            .into_iter()
            .filter(|(_, d)| *d <= threshold)
            .collect();
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(hits
            .into_iter()
            .take(top_n)
            .enumerate()
            .map(|(i, (person_id, distance))| MatchResult {
                person_id,
                distance,
                rank: i + 1,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn e(c: &[f64]) -> Embedding {
        Embedding::new(c.to_vec(), 1)
    }

    #[test]
    fn distance_basics() {
        assert_eq!(distance(&e(&[0.0, 0.0]), &e(&[3.0, 4.0])).unwrap(), 5.0);
        let a = e(&[1.0, -2.0, 0.5]);
        let b = e(&[0.25, 7.0, -1.0]);
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
        assert_eq!(distance(&a, &b).unwrap(), distance(&b, &a).unwrap());
        assert!(distance(&a, &Embedding::new(vec![0.0; 3], 2)).is_err());
    }

    #[test]
    fn identify_hand_placed() {
        let g = Gallery::new(1)
            .enroll_embeddings("p1", vec![e(&[0.0, 0.0]), e(&[1.0, 0.0]), e(&[0.0, 0.0])])
            .unwrap()
            .enroll_embeddings("p2", vec![e(&[5.0, 5.0]); 3])
            .unwrap()
            .enroll_embeddings("p3", vec![e(&[0.0, 3.0]); 3])
            .unwrap();
        let out = g.identify(&e(&[1.0, 1.0]), 2, 3.0).unwrap();
        // brute force: p1 -> min(√2, 1) = 1; p3 -> √(1 + 4) = √5; p2 -> √32 > 3
        assert_eq!(out.len(), 2);
        assert_eq!(
            (out[0].person_id.as_str(), out[0].distance, out[0].rank),
            ("p1", 1.0, 1)
        );
        assert_eq!(out[1].person_id, "p3");
        assert!((out[1].distance - libm::sqrt(5.0)).abs() < 1e-15);
        assert_eq!(out[1].rank, 2);
        assert!(g.identify(&e(&[1.0, 1.0]), 2, 0.5).unwrap().is_empty());
    }

    #[test]
    fn identify_errors() {
        let g = Gallery::new(1);
        assert_eq!(
            g.identify(&e(&[0.0]), 1, 1.0),
            Err(RecognitionError::EmptyGallery)
        );
        let g = g.enroll_embeddings("a", vec![e(&[0.0]); 3]).unwrap();
        assert!(g.identify(&e(&[0.0]), 0, 1.0).is_err());
        assert!(g.identify(&e(&[0.0]), 1, 0.0).is_err());
        assert!(matches!(
            g.identify(&Embedding::new(vec![0.0], 2), 1, 1.0),
            Err(RecognitionError::ModelVersionMismatch { .. })
        ));
        let empty = Gallery::new(1)
            .enroll_embeddings("z", vec![e(&[]); 3])
            .unwrap();
        assert_eq!(
            empty.identify(&e(&[]), 1, 1.0),
            Err(RecognitionError::DegenerateModel)
        );
    }

    #[test]
    fn enrollment_rules() {
        let g = Gallery::new(1);
        assert_eq!(
            g.clone().enroll_embeddings("a", vec![e(&[0.0]); 2]),
            Err(RecognitionError::InsufficientGallery(2))
        );
        let g = g.enroll_embeddings("a", vec![e(&[0.0]); 3]).unwrap();
        assert_eq!(g.embeddings("a").unwrap().len(), 3);
        assert_eq!(
            g.enroll_embeddings("a", vec![e(&[1.0]); 3]),
            Err(RecognitionError::DuplicatePerson("a".into()))
        );
    }
}

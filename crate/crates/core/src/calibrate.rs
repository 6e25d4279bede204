//! Match-threshold calibration from genuine and impostor distance samples.

use alloc::vec::Vec;

use crate::error::RecognitionError;
use crate::gallery::{distance, Embedding};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceProfile {
    /// Pairwise distances between embeddings of the same person.
    pub genuine: Vec<f64>,
    /// Pairwise distances between embeddings of different persons.
    pub impostor: Vec<f64>,
}

/// All within-group and cross-group pairwise distances.
pub fn distance_profile(groups: &[Vec<Embedding>]) -> Result<DistanceProfile, RecognitionError> {
    let mut profile = DistanceProfile::default();
    for (gi, group) in groups.iter().enumerate() {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                profile.genuine.push(distance(a, b)?);
            }
            for other in &groups[gi + 1..] {
                for b in other {
                    profile.impostor.push(distance(a, b)?);
                }
            }
        }
    }
    Ok(profile)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Midpoint between the genuine and impostor distance medians.
pub fn calibrate_threshold(profile: &DistanceProfile) -> Option<f64> {
    Some((median(&profile.genuine)? + median(&profile.impostor)?) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn midpoint_of_two_clusters() {
        let e = |x: f64| Embedding::new(vec![x], 1);
        let groups = vec![vec![e(0.0), e(1.0)], vec![e(10.0), e(11.0)]];
        let p = distance_profile(&groups).unwrap();
        assert_eq!(p.genuine, vec![1.0, 1.0]);
        assert_eq!(p.impostor, vec![10.0, 11.0, 9.0, 10.0]);
        assert_eq!(calibrate_threshold(&p), Some((1.0 + 10.0) / 2.0));
    }
}

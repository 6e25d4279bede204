//! Eigenface models trained with the snapshot (Gram matrix) method.
//!
//! With `N` centered samples as the columns of `A` (`d` x `N`, `N` much smaller
//! than `d`), the nonzero eigenpairs of the covariance `A Aᵀ / N` are recovered
//! from the `N` x `N` Gram matrix `Aᵀ A / N`: if `G v = λ v` then `A v` is an
//! eigenvector of the covariance with the same `λ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::RecognitionError;
use crate::gallery::Embedding;
use crate::linalg::{dot, jacobi_eigen, norm, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};

/// Components whose eigenvalue falls below this fraction of the largest one
/// carry no usable variance.
pub const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;
/// Centering leaves rounding residue of order `ε·|x|`; eigenvalues below this
/// fraction of the mean squared sample norm are treated as exactly zero.
pub const ROUNDOFF_EIGEN_FLOOR: f64 = 1e-20;

/// A trained projection basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    dim: usize,
    mean: Vec<f64>,
    /// Column-major: component `j` occupies `basis[j * dim..(j + 1) * dim]`.
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
    version: u64,
}

impl EigenModel {
    /// Reassembles a model, checking shapes and eigenvalue ordering.
    pub fn from_parts(
        dim: usize,
        mean: Vec<f64>,
        basis: Vec<f64>,
        eigenvalues: Vec<f64>,
        version: u64,
    ) -> Result<Self, RecognitionError> {
        if mean.len() != dim {
            return Err(RecognitionError::DimensionMismatch {
                expected: dim,
                actual: mean.len(),
            });
        }
        if basis.len() != dim * eigenvalues.len() {
            return Err(RecognitionError::DimensionMismatch {
                expected: dim * eigenvalues.len(),
                actual: basis.len(),
            });
        }
        if eigenvalues.iter().any(|v| !(*v >= 0.0)) || eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(RecognitionError::InvalidArgument(
                "eigenvalues must be non-negative and descending",
            ));
        }
        Ok(Self {
            dim,
            mean,
            basis,
            eigenvalues,
            version,
        })
    }

    pub fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn component(&self, j: usize) -> &[f64] {
        &self.basis[j * self.dim..(j + 1) * self.dim]
    }

    /// Largest absolute entry of `BᵀB - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.k();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in i..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(self.component(i), self.component(j)) - target).abs());
            }
        }
        worst
    }

    fn check_dim(&self, len: usize) -> Result<(), RecognitionError> {
        if len == self.dim {
            Ok(())
        } else {
            Err(RecognitionError::DimensionMismatch {
                expected: self.dim,
                actual: len,
            })
        }
    }

    /// Coordinates `Bᵀ (sample - mean)`.
    pub fn embed(&self, sample: &[f64]) -> Result<Embedding, RecognitionError> {
        self.check_dim(sample.len())?;
        let centered: Vec<f64> = sample.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let coords = (0..self.k())
            .map(|j| dot(self.component(j), &centered))
            .collect();
        Ok(Embedding::new(coords, self.version))
    }

    /// `mean + B coords`, without clamping.
    pub fn reconstruct_raw(&self, embedding: &Embedding) -> Result<Vec<f64>, RecognitionError> {
        if embedding.model_version != self.version {
            return Err(RecognitionError::ModelVersionMismatch {
                expected: self.version,
                actual: embedding.model_version,
            });
        }
        if embedding.coords.len() != self.k() {
            return Err(RecognitionError::DimensionMismatch {
                expected: self.k(),
                actual: embedding.coords.len(),
            });
        }
        let mut out = self.mean.clone();
        for (j, c) in embedding.coords.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.component(j)) {
                *o += c * b;
            }
        }
        Ok(out)
    }

    /// `mean + B coords`, clamped to `[0, 1]`.
    pub fn reconstruct(&self, embedding: &Embedding) -> Result<Vec<f64>, RecognitionError> {
        let mut out = self.reconstruct_raw(embedding)?;
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(out)
    }

    /// The same model truncated to its first `k` components.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            dim: self.dim,
            mean: self.mean.clone(),
            basis: self.basis[..k * self.dim].to_vec(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            version: self.version,
        }
    }
}

/// Trains a `k`-component model (version 1) from equally sized samples.
///
/// Components with eigenvalue below `1e-12` times the largest (or below `1e-12`
/// outright when the largest is 0 up to rounding) are dropped, so the result
/// may hold fewer than `k` components, possibly none.
pub fn train_eigenmodel<S: AsRef<[f64]>>(
    samples: &[S],
    k: usize,
) -> Result<EigenModel, RecognitionError> {
    let n = samples.len();
    if n < 2 {
        return Err(RecognitionError::TooFewChips(n));
    }
    let dim = samples[0].as_ref().len();
    for s in samples {
        if s.as_ref().len() != dim {
            return Err(RecognitionError::DimensionMismatch {
                expected: dim,
                actual: s.as_ref().len(),
            });
        }
    }
    let max_k = dim.min(n - 1);
    if k == 0 || k > max_k {
        return Err(RecognitionError::KOutOfRange { k, max: max_k });
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.as_ref().iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = dot(&centered[i], &centered[j]) / n as f64;
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let eig = jacobi_eigen(&gram, n, JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)?;

    let energy = samples
        .iter()
        .map(|s| dot(s.as_ref(), s.as_ref()))
        .sum::<f64>()
        / n as f64;
    let largest = eig.values.first().copied().unwrap_or(0.0);
    let roundoff = ROUNDOFF_EIGEN_FLOOR * energy;
    let floor = if largest > roundoff {
        RELATIVE_EIGEN_FLOOR * largest
    } else {
        RELATIVE_EIGEN_FLOOR.max(roundoff)
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &lambda) in eig.values.iter().enumerate() {
        if basis.len() == k || lambda < floor {
            break;
        }
        let weights = eig.vector(j);
        let mut u = vec![0.0; dim];
        for (w, a) in weights.iter().zip(&centered) {
            for (ui, ai) in u.iter_mut().zip(a) {
                *ui += w * ai;
            }
        }
        let raw_norm = norm(&u);
        // two rounds of modified Gram-Schmidt against the accepted columns
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&u, b);
                for (ui, bi) in u.iter_mut().zip(b) {
                    *ui -= proj * bi;
                }
            }
        }
        let residual = norm(&u);
        if !(residual > 1e-8 * raw_norm) {
            continue;
        }
        u.iter_mut().for_each(|x| *x /= residual);
        fix_sign(&mut u);
        basis.push(u);
        eigenvalues.push(lambda);
    }

    Ok(EigenModel {
        dim,
        mean,
        basis: basis.concat(),
        eigenvalues,
        version: 1,
    })
}

/// Makes the largest-magnitude entry (first one on ties) positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

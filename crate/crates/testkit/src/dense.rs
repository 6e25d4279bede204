//! Dense covariance eigendecomposition via nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenpairs of the population covariance `(1/N) Σ (x - m)(x - m)ᵀ`, sorted
/// by descending eigenvalue. Eigenvectors are the columns of the matrix.
pub fn covariance_eigen(samples: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len();
    let d = samples[0].len();
    let data = DMatrix::from_fn(d, n, |i, j| samples[j][i]);
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Total variance `(1/N) Σ ‖x - m‖²`.
pub fn total_variance(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect();
    samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// Sine of the largest principal angle between the column spans of two
/// matrices with orthonormal columns.
///
/// Computed as `‖(I - A Aᵀ) B‖₂`, which stays accurate for tiny angles.
pub fn max_principal_angle_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    residual
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

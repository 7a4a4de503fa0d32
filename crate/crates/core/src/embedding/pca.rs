use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingMatrix;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a principal direction counts as absent.
const RANK_TOLERANCE: f64 = 1e-10;

/// Top-`n` principal directions of the mean-centered features, one per row.
///
/// Rows are ordered by descending eigenvalue and signed so that each row's
/// largest-magnitude entry is positive (first such entry on ties).
pub fn pca_init(dataset: &Dataset, n: usize) -> Result<EmbeddingMatrix> {
    let dim = dataset.dim();
    if n == 0 || n > dim {
        return Err(Error::InvalidConfig(format!(
            "target dimension {n} must be in 1..={dim}"
        )));
    }
    let m = dataset.len();
    if m < 2 {
        return Err(Error::DegenerateData(
            "need at least two records for a covariance".into(),
        ));
    }

    let mut mean = vec![0.0; dim];
    for r in dataset.records() {
        mean.iter_mut().zip(&r.values).for_each(|(a, x)| *a += x);
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for r in dataset.records() {
        centered
            .iter_mut()
            .zip(r.values.iter().zip(&mean))
            .for_each(|(c, (x, mu))| *c = x - mu);
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (m - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]];
    let nth = eig.eigenvalues[order[n - 1]];
    if top.is_nan() || top <= 0.0 || nth <= top * RANK_TOLERANCE {
        return Err(Error::DegenerateData(format!(
            "covariance rank is below the requested {n} components"
        )));
    }

    let mut data = Vec::with_capacity(n * dim);
    for &k in &order[..n] {
        let col = eig.eigenvectors.column(k);
        let norm = col.norm();
        let mut pivot = 0;
        for i in 1..dim {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        data.extend(col.iter().map(|x| sign * x / norm));
    }
    EmbeddingMatrix::new(n, dim, data)
}

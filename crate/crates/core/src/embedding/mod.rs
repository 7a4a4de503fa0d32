//! Linear embeddings learned from triplet constraints.
//!
//! [`EmbeddingMatrix`] is the `n x N` projection `W`. Similarity between two
//! input vectors is the inner product of their projections,
//! `S_W(a, b) = (W a) . (W b)`.

mod matrix_io;
mod pca;
mod sampler;
mod train;
mod triplet;

use crate::data::dot;
use crate::error::{Error, Result};

pub use matrix_io::{load_matrix, save_matrix};
pub use pca::pca_init;
pub use sampler::{sample_triplet, NegativeRule, TripletSampler};
pub use train::{train, train_tde, train_tpe, LogEntry, LrDecay, Method, TrainConfig, TrainOutput};
pub use triplet::{
    nll_loss, probability_from_scores, tde_gradient, tde_gradient_vectors, tde_loss,
    tde_loss_vectors, tpe_gradient, tpe_gradient_vectors, triplet_log_probability,
    triplet_probability, triplet_probability_vectors, Triplet,
};

/// Row-major `rows x cols` real matrix used for `W` and for its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(
                "matrix dimensions must be positive".into(),
            ));
        }
        if rows > cols {
            return Err(Error::InvalidConfig(format!(
                "output dimension {rows} exceeds input dimension {cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
        }
        Ok(EmbeddingMatrix { rows, cols, data })
    }

    pub(crate) fn zeros(rows: usize, cols: usize) -> Self {
        EmbeddingMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Output dimension `n`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Input dimension `N`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `W v`, without re-normalization.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(v)?;
        Ok(self.apply(v))
    }

    pub(crate) fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, v))
            .collect()
    }

    /// `W^T y` for an `n`-vector `y`.
    pub(crate) fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            out.iter_mut().zip(row).for_each(|(o, w)| *o += yr * w);
        }
        out
    }

    /// `S_W(a, b) = (W a) . (W b)`.
    pub fn similarity(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_input(a)?;
        self.check_input(b)?;
        Ok(dot(&self.apply(a), &self.apply(b)))
    }

    /// `self += scale * (x y^T)` for `x` of length `rows` and `y` of length `cols`.
    pub(crate) fn add_outer(&mut self, scale: f64, x: &[f64], y: &[f64]) {
        for (row, &xr) in self.data.chunks_exact_mut(self.cols).zip(x) {
            let s = scale * xr;
            row.iter_mut().zip(y).for_each(|(w, yc)| *w += s * yc);
        }
    }

    /// `self += scale * other`.
    pub(crate) fn add_scaled(&mut self, scale: f64, other: &EmbeddingMatrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += scale * b);
    }
}

/// `W v`; see [`EmbeddingMatrix::project`].
pub fn project(w: &EmbeddingMatrix, v: &[f64]) -> Result<Vec<f64>> {
    w.project(v)
}

/// `(W a) . (W b)`; see [`EmbeddingMatrix::similarity`].
pub fn similarity(w: &EmbeddingMatrix, a: &[f64], b: &[f64]) -> Result<f64> {
    w.similarity(a, b)
}

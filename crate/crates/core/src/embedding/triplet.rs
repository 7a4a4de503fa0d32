//! The triplet probability objective, its gradient, and the hinge-loss
//! (TDE) baseline.

use super::EmbeddingMatrix;
use crate::data::{dot, Dataset};
use crate::error::{Error, Result};

/// Anchor, positive and negative record positions within a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    /// Checks the label constraints against `dataset`.
    pub fn new(dataset: &Dataset, anchor: usize, positive: usize, negative: usize) -> Result<Self> {
        let n = dataset.len();
        if anchor >= n || positive >= n || negative >= n {
            return Err(Error::OutOfRange(format!(
                "triplet ({anchor}, {positive}, {negative}) outside {n} records"
            )));
        }
        if anchor == positive {
            return Err(Error::InvalidConfig("anchor and positive coincide".into()));
        }
        if dataset.subject(anchor) != dataset.subject(positive) {
            return Err(Error::InvalidConfig(
                "positive has a different subject".into(),
            ));
        }
        if dataset.subject(anchor) == dataset.subject(negative) {
            return Err(Error::InvalidConfig(
                "negative shares the anchor's subject".into(),
            ));
        }
        Ok(Triplet {
            anchor,
            positive,
            negative,
        })
    }

    fn vectors<'a>(&self, ds: &'a Dataset) -> (&'a [f64], &'a [f64], &'a [f64]) {
        (
            ds.features(self.anchor),
            ds.features(self.positive),
            ds.features(self.negative),
        )
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `e^{s_ij} / (e^{s_ij} + e^{s_ik})`, computed as `sigmoid(s_ij - s_ik)`.
///
/// The result is clamped into the open interval: saturated triplets report
/// `1 - 2^-53` or the smallest positive normal number rather than 1 or 0.
pub fn probability_from_scores(s_ij: f64, s_ik: f64) -> f64 {
    sigmoid(s_ij - s_ik).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn scores(w: &EmbeddingMatrix, a: &[f64], p: &[f64], n: &[f64]) -> (f64, f64) {
    let wa = w.apply(a);
    (dot(&wa, &w.apply(p)), dot(&wa, &w.apply(n)))
}

pub fn triplet_probability_vectors(
    w: &EmbeddingMatrix,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> f64 {
    let (s_ij, s_ik) = scores(w, anchor, positive, negative);
    probability_from_scores(s_ij, s_ik)
}

/// Probability that `t` satisfies `S_W(anchor, positive) > S_W(anchor, negative)`.
pub fn triplet_probability(w: &EmbeddingMatrix, t: &Triplet, dataset: &Dataset) -> f64 {
    let (a, p, n) = t.vectors(dataset);
    triplet_probability_vectors(w, a, p, n)
}

/// `ln p` of a triplet, accurate even where `p` rounds to 1.
pub fn triplet_log_probability(w: &EmbeddingMatrix, t: &Triplet, dataset: &Dataset) -> f64 {
    let (a, p, n) = t.vectors(dataset);
    let (s_ij, s_ik) = scores(w, a, p, n);
    -softplus(s_ik - s_ij)
}

/// Negative log-likelihood summed (not averaged) over `triplets`.
pub fn nll_loss(w: &EmbeddingMatrix, triplets: &[Triplet], dataset: &Dataset) -> f64 {
    triplets
        .iter()
        .map(|t| -triplet_log_probability(w, t, dataset))
        .sum()
}

/// Gradient of `-ln p` with respect to `W`:
/// `-(1 - p) W (a d^T + d a^T)` with `d = positive - negative`.
pub fn tpe_gradient_vectors(
    w: &EmbeddingMatrix,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> EmbeddingMatrix {
    let d: Vec<f64> = positive.iter().zip(negative).map(|(p, n)| p - n).collect();
    let wa = w.apply(anchor);
    let wd = w.apply(&d);
    // 1 - p, evaluated directly so it stays accurate when p is near 1.
    let miss = sigmoid(-dot(&wa, &wd));
    let mut g = EmbeddingMatrix::zeros(w.rows(), w.cols());
    g.add_outer(-miss, &wa, &d);
    g.add_outer(-miss, &wd, anchor);
    g
}

pub fn tpe_gradient(w: &EmbeddingMatrix, t: &Triplet, dataset: &Dataset) -> EmbeddingMatrix {
    let (a, p, n) = t.vectors(dataset);
    tpe_gradient_vectors(w, a, p, n)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Hinge margin term `alpha + |W(a-p)|^2 - |W(a-n)|^2` before clipping at 0.
fn tde_violation(
    w: &EmbeddingMatrix,
    alpha: f64,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let ap = diff(anchor, positive);
    let an = diff(anchor, negative);
    let wap = w.apply(&ap);
    let wan = w.apply(&an);
    let v = alpha + (dot(&wap, &wap) - dot(&wan, &wan));
    (v, ap, an)
}

pub fn tde_loss_vectors(
    w: &EmbeddingMatrix,
    alpha: f64,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> f64 {
    tde_violation(w, alpha, anchor, positive, negative)
        .0
        .max(0.0)
}

/// `max(0, alpha + d_W(anchor, positive) - d_W(anchor, negative))` with
/// `d_W(a, b) = |W (a - b)|^2`.
pub fn tde_loss(w: &EmbeddingMatrix, t: &Triplet, alpha: f64, dataset: &Dataset) -> f64 {
    let (a, p, n) = t.vectors(dataset);
    tde_loss_vectors(w, alpha, a, p, n)
}

/// Subgradient of [`tde_loss_vectors`]; zero when the hinge is inactive or exactly at the kink.
pub fn tde_gradient_vectors(
    w: &EmbeddingMatrix,
    alpha: f64,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> EmbeddingMatrix {
    let mut g = EmbeddingMatrix::zeros(w.rows(), w.cols());
    let (v, ap, an) = tde_violation(w, alpha, anchor, positive, negative);
    if v > 0.0 {
        g.add_outer(2.0, &w.apply(&ap), &ap);
        g.add_outer(-2.0, &w.apply(&an), &an);
    }
    g
}

pub fn tde_gradient(
    w: &EmbeddingMatrix,
    t: &Triplet,
    alpha: f64,
    dataset: &Dataset,
) -> EmbeddingMatrix {
    let (a, p, n) = t.vectors(dataset);
    tde_gradient_vectors(w, alpha, a, p, n)
}

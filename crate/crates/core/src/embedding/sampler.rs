//! Online triplet sampling with hard-negative mining.

use rand::Rng;

use super::triplet::probability_from_scores;
use super::{EmbeddingMatrix, Triplet};
use crate::data::{dot, Dataset};
use crate::error::{Error, Result};

/// How the negative is chosen from the sampled candidate pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeRule {
    /// Lowest triplet probability (TPE).
    MinProbability,
    /// Largest hinge violation `alpha + d_W(a,p) - d_W(a,n)` (TDE).
    MaxViolation { alpha: f64 },
}

/// Precomputed sampling tables for one dataset.
#[derive(Debug, Clone)]
pub struct TripletSampler<'a> {
    dataset: &'a Dataset,
    anchors: Vec<usize>,
}

impl<'a> TripletSampler<'a> {
    pub fn new(dataset: &'a Dataset) -> Result<Self> {
        if dataset.num_subjects() < 2 {
            return Err(Error::InsufficientData(
                "triplets need at least two subjects".into(),
            ));
        }
        let anchors: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.subject_records(dataset.subject(i)).len() >= 2)
            .collect();
        if anchors.is_empty() {
            return Err(Error::InsufficientData(
                "no subject has two or more records".into(),
            ));
        }
        Ok(TripletSampler { dataset, anchors })
    }

    /// Draws an anchor and positive uniformly, then mines the negative from
    /// `pool_size` candidates drawn with replacement from other subjects.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        w: &EmbeddingMatrix,
        pool_size: usize,
        rule: NegativeRule,
        rng: &mut R,
    ) -> Result<Triplet> {
        if pool_size == 0 {
            return Err(Error::InvalidConfig(
                "negative pool size must be at least 1".into(),
            ));
        }
        let ds = self.dataset;
        let anchor = self.anchors[rng.random_range(0..self.anchors.len())];
        let same = ds.subject_records(ds.subject(anchor));
        let mut pos = rng.random_range(0..same.len() - 1);
        if same[pos] >= anchor {
            pos += 1;
        }
        let positive = same[pos];

        let others = ds.len() - same.len();
        let mut pool: Vec<usize> = (0..pool_size)
            .map(|_| nth_outside(same, rng.random_range(0..others)))
            .collect();
        pool.sort_unstable();
        pool.dedup();
        let negative = hardest_negative(ds, w, anchor, positive, &pool, rule);
        Ok(Triplet {
            anchor,
            positive,
            negative,
        })
    }
}

/// The `k`-th record position (0-based) not contained in the ascending list `excluded`.
fn nth_outside(excluded: &[usize], k: usize) -> usize {
    let mut idx = k;
    for &e in excluded {
        if e <= idx {
            idx += 1;
        } else {
            break;
        }
    }
    idx
}

/// Picks the hardest candidate under `rule`; ties go to the lowest record index.
///
/// `candidates` need not be sorted or unique.
pub(crate) fn hardest_negative(
    ds: &Dataset,
    w: &EmbeddingMatrix,
    anchor: usize,
    positive: usize,
    candidates: &[usize],
    rule: NegativeRule,
) -> usize {
    let va = ds.features(anchor);
    let mut best: Option<(f64, usize)> = None;
    let mut consider = |key: f64, idx: usize| match best {
        Some((k, i)) if key > k || (key == k && idx > i) => {}
        _ => best = Some((key, idx)),
    };
    match rule {
        NegativeRule::MinProbability => {
            // S_W(a, k) = v_k . (W^T W v_a)
            let gram_anchor = w.apply_transpose(&w.apply(va));
            let s_ij = dot(&gram_anchor, ds.features(positive));
            for &k in candidates {
                let p = probability_from_scores(s_ij, dot(&gram_anchor, ds.features(k)));
                consider(p, k);
            }
        }
        NegativeRule::MaxViolation { alpha } => {
            let d_ij = sq_dist(w, va, ds.features(positive));
            for &k in candidates {
                let violation = alpha + d_ij - sq_dist(w, va, ds.features(k));
                consider(-violation, k);
            }
        }
    }
    best.expect("candidate pool is non-empty").1
}

fn sq_dist(w: &EmbeddingMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let wd = w.apply(&d);
    dot(&wd, &wd)
}

/// Samples one TPE triplet; see [`TripletSampler::sample`].
pub fn sample_triplet<R: Rng + ?Sized>(
    dataset: &Dataset,
    w: &EmbeddingMatrix,
    pool_size: usize,
    rng: &mut R,
) -> Result<Triplet> {
    TripletSampler::new(dataset)?.sample(w, pool_size, NegativeRule::MinProbability, rng)
}

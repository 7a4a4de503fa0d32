use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClusterAssignment;
use crate::data::{dot, normalize};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutput {
    pub assignment: ClusterAssignment,
    /// Sum of squared chord distances `|x - c|^2 = 2 - 2 cos(x, c)`.
    pub cost: f64,
    /// Index of the restart that produced the result.
    pub restart: usize,
}

/// Spherical k-means: points go to the centroid of highest cosine (lowest
/// centroid index on ties) and centroids are re-normalized means. Each
/// restart seeds from `k` distinct random points; the lowest-cost restart
/// wins, earliest on ties.
pub fn kmeans(features: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansOutput> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(Error::OutOfRange(format!("k = {k} outside 1..={n}")));
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let points = features
        .iter()
        .map(|f| normalize(f))
        .collect::<Result<Vec<_>>>()?;
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for restart in 0..restarts {
        let mut centroids: Vec<Vec<f64>> = sample(&mut rng, n, k)
            .into_iter()
            .map(|i| points[i].clone())
            .collect();
        let mut labels = vec![usize::MAX; n];
        for _ in 0..MAX_ITERATIONS {
            let mut changed = false;
            for (p, label) in points.iter().zip(labels.iter_mut()) {
                let c = nearest(p, &centroids).0;
                if *label != c {
                    *label = c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = vec![vec![0.0; dim]; k];
            for (p, &l) in points.iter().zip(&labels) {
                sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
            }
            for (c, s) in centroids.iter_mut().zip(&sums) {
                // empty clusters and zero sums keep their previous centroid
                if let Ok(u) = normalize(s) {
                    *c = u;
                }
            }
        }
        let cost: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| (2.0 - 2.0 * dot(p, &centroids[l])).max(0.0))
            .sum();
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, restart, labels));
        }
    }
    let (cost, restart, labels) = best.expect("at least one restart");
    Ok(KMeansOutput {
        assignment: ClusterAssignment::from_labels(&labels, None),
        cost,
        restart,
    })
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, dot(p, &centroids[0]));
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let s = dot(p, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

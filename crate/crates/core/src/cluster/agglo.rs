//! Average-linkage (UPGMA) agglomeration on cosine distance `1 - cos`.
//!
//! The merge loop always joins the globally closest pair of clusters; among
//! equally close pairs it takes the lexicographically smallest pair of
//! cluster ids, where a cluster's id is its smallest member index. Each
//! active cluster caches its nearest higher-id neighbour so a step costs
//! O(N) plus a row rescan for every cluster whose cached neighbour was
//! touched by the merge. Memory is one condensed `N(N-1)/2` matrix.

use rayon::prelude::*;

use super::{ClusterAssignment, Merge, MergeHistory};
use crate::data::l2_norm;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Upper triangle of a symmetric matrix without its diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CondensedMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// Entry `(i, j)` for `i != j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.data[self.index(a, b)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = self.index(a, b);
        self.data[k] = v;
    }
}

fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn unit_rows(features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = features
        .first()
        .ok_or_else(|| Error::EmptyInput("nothing to cluster".into()))?
        .len();
    features
        .iter()
        .map(|f| {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.len(),
                });
            }
            let norm = l2_norm(f);
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Normalization(
                    "cannot cluster a zero or non-finite vector".into(),
                ));
            }
            Ok(f.iter().map(|x| x / norm).collect())
        })
        .collect()
}

/// Pairwise cosine distances `1 - cos`, clamped to `[0, 2]`.
pub fn cosine_distance_matrix(features: &[Vec<f64>]) -> Result<CondensedMatrix> {
    let unit = unit_rows(features)?;
    let n = unit.len();
    let mut data = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
    let mut rest = data.as_mut_slice();
    for i in 0..n.saturating_sub(1) {
        let (row, tail) = rest.split_at_mut(n - 1 - i);
        rows.push((i, row));
        rest = tail;
    }
    rows.into_par_iter().for_each(|(i, row)| {
        for (slot, v) in row.iter_mut().zip(&unit[i + 1..]) {
            *slot = (1.0 - dot4(&unit[i], v)).clamp(0.0, 2.0);
        }
    });
    Ok(CondensedMatrix { n, data })
}

struct Engine {
    d: CondensedMatrix,
    active: Vec<bool>,
    size: Vec<usize>,
    nn: Vec<usize>,
    nnd: Vec<f64>,
}

impl Engine {
    fn new(d: CondensedMatrix) -> Self {
        let n = d.n;
        let mut e = Engine {
            d,
            active: vec![true; n],
            size: vec![1; n],
            nn: vec![NONE; n],
            nnd: vec![f64::INFINITY; n],
        };
        for i in 0..n {
            e.rescan(i);
        }
        e
    }

    /// Nearest active neighbour of `i` among higher ids; lowest id on ties.
    fn rescan(&mut self, i: usize) {
        let (mut best, mut best_d) = (NONE, f64::INFINITY);
        for k in i + 1..self.d.n {
            if self.active[k] {
                let v = self.d.get(i, k);
                if v < best_d {
                    best = k;
                    best_d = v;
                }
            }
        }
        self.nn[i] = best;
        self.nnd[i] = best_d;
    }

    fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.d.n {
            if self.active[i] && self.nn[i] != NONE && best.is_none_or(|(_, bd)| self.nnd[i] < bd) {
                best = Some((i, self.nnd[i]));
            }
        }
        best.map(|(i, v)| (i, self.nn[i], v))
    }

    /// Merges `j` into `i` (`i < j`) and repairs the neighbour cache.
    fn merge(&mut self, i: usize, j: usize) {
        let n = self.d.n;
        let (si, sj) = (self.size[i] as f64, self.size[j] as f64);
        self.active[j] = false;
        for k in 0..n {
            if self.active[k] && k != i {
                let v = (si * self.d.get(i, k) + sj * self.d.get(j, k)) / (si + sj);
                self.d.set(i, k, v);
            }
        }
        self.size[i] += self.size[j];
        self.nn[j] = NONE;
        self.nnd[j] = f64::INFINITY;

        for k in 0..i {
            if !self.active[k] {
                continue;
            }
            let v = self.d.get(k, i);
            if self.nn[k] == i || self.nn[k] == j {
                if v <= self.nnd[k] {
                    self.nn[k] = i;
                    self.nnd[k] = v;
                } else {
                    self.rescan(k);
                }
            } else if v < self.nnd[k] || (v == self.nnd[k] && i < self.nn[k]) {
                self.nn[k] = i;
                self.nnd[k] = v;
            }
        }
        self.rescan(i);
        for k in i + 1..j {
            if self.active[k] && self.nn[k] == j {
                self.rescan(k);
            }
        }
    }
}

/// Runs the full agglomeration. When `snapshot_below` is set, also returns
/// the cluster root of every record at the moment the next merge would
/// reach that distance.
fn run(
    features: &[Vec<f64>],
    snapshot_below: Option<f64>,
) -> Result<(MergeHistory, Option<Vec<usize>>)> {
    let d = cosine_distance_matrix(features)?;
    let n = d.n;
    let mut engine = Engine::new(d);
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut owner: Vec<usize> = (0..n).collect();
    let mut snapshot = None;
    let mut last = 0.0f64;
    while let Some((i, j, v)) = engine.closest_pair() {
        // average linkage is monotone; clamp away rounding-level inversions
        let distance = v.max(last);
        last = distance;
        if snapshot.is_none() && snapshot_below.is_some_and(|c| distance >= c) {
            snapshot = Some(owner.clone());
        }
        engine.merge(i, j);
        if snapshot.is_none() {
            owner.iter_mut().filter(|o| **o == j).for_each(|o| *o = i);
        }
        merges.push(Merge {
            a: i,
            b: j,
            distance,
            size: engine.size[i],
        });
    }
    if snapshot_below.is_some() && snapshot.is_none() {
        snapshot = Some(owner);
    }
    Ok((MergeHistory { n, merges }, snapshot))
}

/// Full average-linkage merge history of `features`.
pub fn linkage(features: &[Vec<f64>]) -> Result<MergeHistory> {
    Ok(run(features, None)?.0)
}

/// Clusters by merging while the closest pair's average cosine distance is
/// below `cutoff` (in `[0, 2]`). The full history is retained for replay.
pub fn agglomerate(features: &[Vec<f64>], cutoff: f64) -> Result<ClusterAssignment> {
    if !(0.0..=2.0).contains(&cutoff) {
        return Err(Error::OutOfRange(format!("cutoff {cutoff} outside [0, 2]")));
    }
    let (history, owner) = run(features, Some(cutoff))?;
    Ok(ClusterAssignment::from_labels(
        &owner.expect("snapshot requested"),
        Some(history),
    ))
}

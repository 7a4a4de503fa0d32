use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{linkage, ClusterAssignment};
use crate::error::{Error, Result};

/// Pairwise precision, recall and F1 of a clustering against class labels.
///
/// `precision_undefined` / `recall_undefined` flag a zero denominator (no
/// same-cluster pairs or no same-class pairs); the affected value is then 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

pub fn pairwise_metrics(
    assignment: &ClusterAssignment,
    labels: &[usize],
) -> Result<PairwiseScores> {
    if assignment.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: assignment.len(),
            found: labels.len(),
        });
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut classes: HashMap<usize, u64> = HashMap::new();
    for (&c, &l) in assignment.labels().iter().zip(labels) {
        *cells.entry((c, l)).or_default() += 1;
        *classes.entry(l).or_default() += 1;
    }
    let both: u64 = cells.values().map(|&n| pairs(n)).sum();
    let same_cluster: u64 = assignment
        .cluster_sizes()
        .iter()
        .map(|&n| pairs(n as u64))
        .sum();
    let same_class: u64 = classes.values().map(|&n| pairs(n)).sum();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(both, same_cluster);
    let recall = ratio(both, same_class);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PairwiseScores {
        precision,
        recall,
        f1,
        precision_undefined: same_cluster == 0,
        recall_undefined: same_class == 0,
    })
}

/// Cutoffs `0.00, 0.01, ..., 1.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("cutoff grid is empty".into()));
    }
    if let Some(c) = grid.iter().find(|c| !(0.0..=2.0).contains(*c)) {
        return Err(Error::OutOfRange(format!("cutoff {c} outside [0, 2]")));
    }
    Ok(())
}

/// Grid cutoff with the highest pairwise F1 on labeled data; the smallest
/// cutoff wins ties. Clusters once and replays the merge history per cutoff.
pub fn learn_cutoff(features: &[Vec<f64>], labels: &[usize], grid: &[f64]) -> Result<f64> {
    let curve = pr_curve(features, labels, grid)?;
    let mut best = curve[0];
    for p in &curve[1..] {
        if p.f1 > best.f1 || (p.f1 == best.f1 && p.cutoff < best.cutoff) {
            best = *p;
        }
    }
    Ok(best.cutoff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pairwise precision/recall at each grid cutoff, in grid order.
pub fn pr_curve(features: &[Vec<f64>], labels: &[usize], grid: &[f64]) -> Result<Vec<PrPoint>> {
    check_grid(grid)?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    let history = linkage(features)?;
    grid.iter()
        .map(|&cutoff| {
            let s = pairwise_metrics(&history.cut(cutoff), labels)?;
            Ok(PrPoint {
                cutoff,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub raw_count: usize,
    /// Clusters with at least `min_size` members.
    pub pruned_count: usize,
    /// Per record: whether its cluster survives pruning.
    pub retained: Vec<bool>,
}

/// Counts clusters with at least `min_size` members. Records in smaller
/// clusters keep their assignment but are flagged as not retained.
pub fn prune(assignment: &ClusterAssignment, min_size: usize) -> Pruned {
    let sizes = assignment.cluster_sizes();
    Pruned {
        raw_count: assignment.num_clusters(),
        pruned_count: sizes.iter().filter(|&&s| s >= min_size).count(),
        retained: assignment
            .labels()
            .iter()
            .map(|&l| sizes[l] >= min_size)
            .collect(),
    }
}

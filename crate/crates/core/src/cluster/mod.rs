//! Agglomerative average-linkage clustering on cosine distance, pairwise
//! clustering metrics, and a k-means baseline.

mod agglo;
mod kmeans;
mod metrics;

use serde::{Deserialize, Serialize};

pub use agglo::{agglomerate, cosine_distance_matrix, linkage, CondensedMatrix};
pub use kmeans::{kmeans, KMeansOutput};
pub use metrics::{
    default_grid, learn_cutoff, pairwise_metrics, pr_curve, prune, PairwiseScores, PrPoint, Pruned,
};

/// One merge: clusters `a < b` (identified by their smallest member record
/// index) joined at linkage distance `distance`, producing a cluster of `size` records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Complete merge sequence for `n` records, in merge order. Distances are
/// nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeHistory {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl MergeHistory {
    /// Replays the merges whose distance is below `cutoff`.
    pub fn cut(&self, cutoff: f64) -> ClusterAssignment {
        let mut parent: Vec<usize> = (0..self.n).collect();
        for m in self.merges.iter().take_while(|m| m.distance < cutoff) {
            // records are always their own cluster's smallest member, so `a` stays the root
            parent[m.b] = m.a;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        ClusterAssignment::from_labels(&roots, Some(self.clone()))
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    while parent[i] != root {
        let next = parent[i];
        parent[i] = root;
        i = next;
    }
    root
}

/// Partition of records into clusters numbered `0..num_clusters` in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    num_clusters: usize,
    history: Option<MergeHistory>,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster keys to contiguous ids by first appearance.
    pub fn from_labels(keys: &[usize], history: Option<MergeHistory>) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = keys
            .iter()
            .map(|k| {
                let next = map.len();
                *map.entry(*k).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            labels,
            num_clusters: map.len(),
            history,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Full merge history (agglomerative results only).
    pub fn history(&self) -> Option<&MergeHistory> {
        self.history.as_ref()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// The partition as a sorted list of sorted member lists.
    pub fn as_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            sets[l].push(i);
        }
        sets.sort();
        sets
    }
}

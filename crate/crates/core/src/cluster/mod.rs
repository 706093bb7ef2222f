//! Observation-class discovery.
//!
//! Curves whose distance exceeds ε are tied by a cannot-link constraint and
//! must land in different clusters. Two constraint-aware algorithms are
//! offered, plus the pointwise (non-functional) baseline.

mod functional;
mod hierarchical;
mod kmeans;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use functional::{
    centroid, cluster_curves, fd_clustering, kmeans_vectors, nonfunctional_cluster,
    ClusterResult,
};
pub use hierarchical::{hierarchical_cluster, Dendrogram, Merge};
pub use kmeans::{constrained_kmeans, KMEANS_MAX_ITER};

/// Dense symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from nested rows, checking symmetry, the zero diagonal
    /// and non-negativity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = DistanceMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidSpec(format!("entry ({i}, {j}) = {d}")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::InvalidSpec(format!("non-zero diagonal at {i}")));
                }
                if rows[j][i] != d {
                    return Err(Error::InvalidSpec(format!("asymmetric at ({i}, {j})")));
                }
                m.entries[i * n + j] = d;
            }
        }
        Ok(m)
    }

    /// Absolute differences of scalars.
    pub fn from_scalars(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = DistanceMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, (values[i] - values[j]).abs());
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, d: f64) {
        self.entries[i * self.n + j] = d;
        self.entries[j * self.n + i] = d;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }
}

/// Unordered index pairs `(i, j)`, `i < j`, that must be separated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CannotLinkSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl CannotLinkSet {
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b) in pairs {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidSpec(format!(
                    "invalid cannot-link pair ({a}, {b}) for {n} items"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Ok(CannotLinkSet {
            n,
            pairs: normalized,
            adjacency,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    /// Pairs in ascending lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.pairs.binary_search(&key).is_ok()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// First pair (lexicographically) placed in the same cluster.
    pub fn first_violation(&self, assignment: &[usize]) -> Option<(usize, usize)> {
        self.pairs
            .iter()
            .copied()
            .find(|&(a, b)| assignment[a] == assignment[b])
    }

    pub fn is_satisfied_by(&self, assignment: &[usize]) -> bool {
        self.first_violation(assignment).is_none()
    }
}

/// Pairs strictly farther apart than `eps`; `D[i][j] == eps` stays linkable.
pub fn cannot_links(d: &DistanceMatrix, eps: f64) -> CannotLinkSet {
    let n = d.len();
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    let pairs: Vec<_> = pairs.filter(|&(i, j)| d.get(i, j) > eps).collect();
    CannotLinkSet::new(n, pairs).expect("indices are in range")
}

/// Which clustering algorithm produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Hierarchical,
    ConstrainedKmeans { seed: u64 },
    Nonfunctional,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Hierarchical => f.write_str("hierarchical"),
            Algorithm::ConstrainedKmeans { seed } => write!(f, "constrained-kmeans(seed={seed})"),
            Algorithm::Nonfunctional => f.write_str("nonfunctional"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchical" | "hclust" => Ok(Algorithm::Hierarchical),
            "constrained-kmeans" | "kmeans" | "cop-kmeans" => {
                Ok(Algorithm::ConstrainedKmeans { seed: 0 })
            }
            other => Err(Error::InvalidSpec(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// A labelling of items into `k` non-empty clusters. Cluster ids are ordered
/// by the smallest member index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl Partition {
    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn canonical(raw: &[usize]) -> Partition {
        let mut map = std::collections::HashMap::new();
        let assignment = raw
            .iter()
            .map(|&c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
            .collect();
        Partition {
            k: map.len(),
            assignment,
        }
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

//! Agglomerative complete-linkage clustering with post-hoc constraint checks.

use super::{cannot_links, DistanceMatrix, Partition};
use crate::error::{Error, Result};

/// One agglomeration step. Clusters are named by their smallest member index,
/// so `a < b` and the merged cluster keeps the name `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Complete-linkage dendrogram: `n - 1` merges in order of non-decreasing height.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Builds the dendrogram. Equal merge heights are resolved in favour of
    /// the pair with the smaller (first, second) cluster names.
    pub fn complete_linkage(d: &DistanceMatrix) -> Dendrogram {
        let n = d.len();
        let mut dist: Vec<f64> = (0..n).flat_map(|i| d.row(i).to_vec()).collect();
        let mut active = vec![true; n];
        // Best partner j > i for each active row, with its distance.
        let mut nearest: Vec<Option<(usize, f64)>> = vec![None; n];
        let row_best = |dist: &[f64], active: &[bool], i: usize| -> Option<(usize, f64)> {
            let mut best: Option<(usize, f64)> = None;
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let dij = dist[i * n + j];
                if best.is_none_or(|(_, bd)| dij < bd) {
                    best = Some((j, dij));
                }
            }
            best
        };
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = row_best(&dist, &active, i);
        }

        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut pick: Option<(usize, usize, f64)> = None;
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                if let Some((j, dij)) = nearest[i] {
                    if pick.is_none_or(|(_, _, bd)| dij < bd) {
                        pick = Some((i, j, dij));
                    }
                }
            }
            let (a, b, height) = pick.expect("at least two active clusters");
            merges.push(Merge { a, b, height });

            active[b] = false;
            for k in 0..n {
                if active[k] && k != a {
                    let merged = dist[a * n + k].max(dist[b * n + k]);
                    dist[a * n + k] = merged;
                    dist[k * n + a] = merged;
                }
            }
            // Distances only grow under complete linkage, so only rows that
            // pointed at a or b (and row a itself) can have a stale partner.
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                let stale = i == a || matches!(nearest[i], Some((j, _)) if j == a || j == b);
                if stale {
                    nearest[i] = row_best(&dist, &active, i);
                }
            }
        }
        Dendrogram { n, merges }
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Partition into `k` clusters (applies the first `n - k` merges).
    pub fn cut(&self, k: usize) -> Partition {
        assert!(k >= 1 && k <= self.n.max(1), "cut size {k} out of range");
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..self.n - k] {
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Partition::canonical(&roots)
    }

    /// Smallest `k` whose cut keeps every merged cluster within diameter `eps`.
    ///
    /// A complete-linkage merge height is the diameter of the merged cluster,
    /// so the cut at `k` separates all pairs farther than `eps` exactly when
    /// none of its merges is higher than `eps`.
    pub fn min_clusters_within(&self, eps: f64) -> usize {
        let applied = self.merges.iter().take_while(|m| m.height <= eps).count();
        self.n - applied
    }
}

/// Smallest cut `k <= max_clusters` of the complete-linkage dendrogram that
/// separates every pair with distance above `eps`.
pub fn hierarchical_cluster(d: &DistanceMatrix, max_clusters: usize, eps: f64) -> Result<Partition> {
    let n = d.len();
    if n == 0 {
        return Err(Error::Empty("distance matrix has no items".into()));
    }
    if max_clusters == 0 {
        return Err(Error::InvalidSpec("cluster bound must be at least 1".into()));
    }
    let bound = max_clusters.min(n);
    let links = cannot_links(d, eps);
    let dendrogram = Dendrogram::complete_linkage(d);
    let k = dendrogram.min_clusters_within(eps);
    if k > bound {
        let cut = dendrogram.cut(bound);
        let pair = links
            .first_violation(&cut.assignment)
            .expect("an over-high merge implies a violated pair");
        return Err(Error::Infeasible {
            max_clusters: bound,
            pair,
        });
    }
    let partition = dendrogram.cut(k);
    debug_assert!(links.is_satisfied_by(&partition.assignment));
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pairs() -> DistanceMatrix {
        DistanceMatrix::from_rows(&[
            vec![0.0, 0.1, 5.0, 5.0],
            vec![0.1, 0.0, 5.0, 5.0],
            vec![5.0, 5.0, 0.0, 0.1],
            vec![5.0, 5.0, 0.1, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn all_zero_matrix_is_one_cluster() {
        let d = DistanceMatrix::zeros(4);
        let p = hierarchical_cluster(&d, 4, 0.5).unwrap();
        assert_eq!(p.k, 1);
        assert_eq!(p.assignment, vec![0; 4]);
    }

    #[test]
    fn separates_two_pairs() {
        let p = hierarchical_cluster(&two_pairs(), 4, 1.0).unwrap();
        assert_eq!(p.k, 2);
        assert_eq!(p.assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn infeasible_under_tight_bound() {
        match hierarchical_cluster(&two_pairs(), 1, 1.0) {
            Err(Error::Infeasible { max_clusters, pair }) => {
                assert_eq!(max_clusters, 1);
                assert_eq!(pair, (0, 2));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn tie_breaking_prefers_smaller_names() {
        // All distances equal: merges go (0,1), then (0,2), then (0,3).
        let mut d = DistanceMatrix::zeros(4);
        for i in 0..4 {
            for j in i + 1..4 {
                d.set(i, j, 1.0);
            }
        }
        let dendro = Dendrogram::complete_linkage(&d);
        let pairs: Vec<_> = dendro.merges().iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(dendro.cut(2).assignment, vec![0, 0, 0, 1]);
    }

    #[test]
    fn heights_are_monotone_and_complete() {
        let d = DistanceMatrix::from_scalars(&[0.0, 1.0, 3.0, 3.5, 10.0]);
        let dendro = Dendrogram::complete_linkage(&d);
        let h: Vec<f64> = dendro.merges().iter().map(|m| m.height).collect();
        assert!(h.windows(2).all(|w| w[0] <= w[1]));
        // {2,3} at 0.5, {0,1} at 1, {0,1,2,3} at 3.5 (complete link), then 10.
        assert_eq!(h, vec![0.5, 1.0, 3.5, 10.0]);
    }

    #[test]
    fn single_item() {
        let p = hierarchical_cluster(&DistanceMatrix::zeros(1), 3, 0.1).unwrap();
        assert_eq!(p.k, 1);
    }
}

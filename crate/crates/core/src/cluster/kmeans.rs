//! COP-k-means: k-means whose assignment step honours cannot-link constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CannotLinkSet, Partition};
use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-point seeding: a seeded first centre, then repeatedly the point
/// farthest from all chosen centres (lowest index on ties).
fn farthest_point_init(vectors: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centers = vec![vectors[first].clone()];
    let mut closest: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[first])).collect();
    while centers.len() < k {
        let mut best = 0;
        for i in 1..n {
            if closest[i] > closest[best] {
                best = i;
            }
        }
        centers.push(vectors[best].clone());
        for (i, v) in vectors.iter().enumerate() {
            closest[i] = closest[i].min(sq_dist(v, &vectors[best]));
        }
    }
    centers
}

/// One constrained assignment pass in ascending index order. Returns `None`
/// when some point has no centre compatible with its already-placed
/// cannot-link partners.
fn assign(vectors: &[Vec<f64>], centers: &[Vec<f64>], links: &CannotLinkSet) -> Option<Vec<usize>> {
    let n = vectors.len();
    let mut assignment = vec![usize::MAX; n];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(centers.len());
    for i in 0..n {
        order.clear();
        order.extend(centers.iter().enumerate().map(|(c, ctr)| (sq_dist(&vectors[i], ctr), c)));
        order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let chosen = order.iter().map(|&(_, c)| c).find(|&c| {
            links
                .neighbors(i)
                .iter()
                .all(|&j| assignment[j] != c)
        })?;
        assignment[i] = chosen;
    }
    Some(assignment)
}

fn run(vectors: &[Vec<f64>], links: &CannotLinkSet, k: usize, seed: u64) -> Option<Vec<usize>> {
    let dim = vectors[0].len();
    let mut centers = farthest_point_init(vectors, k, seed);
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..KMEANS_MAX_ITER {
        let assignment = assign(vectors, &centers, links)?;
        if previous.as_ref() == Some(&assignment) {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centre.
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        previous = Some(assignment);
    }
    previous
}

/// Tries `k = 1, 2, ..., max_clusters` and returns the first feasible run.
/// Clusters left empty by a run are dropped from the returned partition.
pub fn constrained_kmeans(
    vectors: &[Vec<f64>],
    links: &CannotLinkSet,
    max_clusters: usize,
    seed: u64,
) -> Result<Partition> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::Empty("no vectors to cluster".into()));
    }
    if links.n_items() != n {
        return Err(Error::InvalidSpec(format!(
            "{} constraint items for {n} vectors",
            links.n_items()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidSpec("vectors differ in dimension".into()));
    }
    if max_clusters == 0 {
        return Err(Error::InvalidSpec("cluster bound must be at least 1".into()));
    }
    let bound = max_clusters.min(n);
    for k in 1..=bound {
        if let Some(assignment) = run(vectors, links, k, seed) {
            return Ok(Partition::canonical(&assignment));
        }
    }
    Err(Error::Infeasible {
        max_clusters: bound,
        pair: links.pairs().first().copied().unwrap_or((0, 0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_one_cluster() {
        let v = vec![vec![1.0, 2.0]; 4];
        let links = CannotLinkSet::new(4, []).unwrap();
        let p = constrained_kmeans(&v, &links, 4, 3).unwrap();
        assert_eq!(p.k, 1);
    }

    #[test]
    fn well_separated_pairs() {
        let v = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let links = CannotLinkSet::new(4, [(1, 2)]).unwrap();
        let p = constrained_kmeans(&v, &links, 4, 11).unwrap();
        assert_eq!(p.k, 2);
        assert_eq!(p.assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn middle_point_joins_nearest_feasible() {
        let v = vec![vec![0.0], vec![1.0], vec![2.0]];
        let links = CannotLinkSet::new(3, [(0, 2)]).unwrap();
        let p = constrained_kmeans(&v, &links, 3, 0).unwrap();
        assert_eq!(p.k, 2);
        assert_ne!(p.assignment[0], p.assignment[2]);
    }

    #[test]
    fn infeasible_with_small_bound() {
        let v = vec![vec![0.0], vec![5.0]];
        let links = CannotLinkSet::new(2, [(0, 1)]).unwrap();
        assert!(matches!(
            constrained_kmeans(&v, &links, 1, 0),
            Err(Error::Infeasible { pair: (0, 1), .. })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let v: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        let links = CannotLinkSet::new(30, [(0, 1), (2, 3), (4, 9), (10, 20)]).unwrap();
        let a = constrained_kmeans(&v, &links, 10, 42).unwrap();
        let b = constrained_kmeans(&v, &links, 10, 42).unwrap();
        assert_eq!(a, b);
        assert!(links.is_satisfied_by(&a.assignment));
    }
}

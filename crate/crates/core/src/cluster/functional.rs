use serde::{Deserialize, Serialize};

use super::{cannot_links, constrained_kmeans, hierarchical_cluster, Algorithm, DistanceMatrix};
use crate::error::{Error, Result};
use crate::fda::distance::{common_domain, matrix_from_samples, sample_all, Grid};
use crate::fda::{BasisSpec, DistanceSpec, FunctionalCurve, LeastSquaresFit, Norm};
use crate::trace::{HyperTrace, TraceSet};

/// Observation classes with their representative (centroid) curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centroids: Vec<FunctionalCurve>,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub spec: DistanceSpec,
}

impl ClusterResult {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn domain(&self) -> Option<(f64, f64)> {
        self.centroids.first().map(FunctionalCurve::domain)
    }
}

/// Grid vectors whose squared Euclidean distances equal the Simpson
/// approximation of `d_{i,2}^2`.
pub fn kmeans_vectors(curves: &[FunctionalCurve], spec: &DistanceSpec) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&FunctionalCurve> = curves.iter().collect();
    let (grid, samples) = sample_all(&refs, spec)?;
    Ok(scaled_vectors(&grid, samples))
}

fn scaled_vectors(grid: &Grid, samples: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let scale: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    samples
        .into_iter()
        .map(|s| s.iter().zip(&scale).map(|(v, w)| v * w).collect())
        .collect()
}

/// Pointwise mean of member curves. Members sharing a basis are averaged
/// coefficient-wise; otherwise they are resampled on the grid, averaged and
/// refitted with the default basis.
pub fn centroid(members: &[&FunctionalCurve], grid_n: usize) -> Result<FunctionalCurve> {
    let first = *members
        .first()
        .ok_or_else(|| Error::Empty("cluster without members".into()))?;
    let m = members.len() as f64;
    if members.iter().all(|c| c.basis() == first.basis()) {
        let mut coefficients = vec![0.0; first.coefficients().len()];
        for c in members {
            for (acc, x) in coefficients.iter_mut().zip(c.coefficients()) {
                *acc += x;
            }
        }
        coefficients.iter_mut().for_each(|x| *x /= m);
        return FunctionalCurve::new(first.basis().clone(), coefficients);
    }
    let domain = common_domain(members)?;
    let grid = Grid::new(domain, grid_n);
    let mut mean = vec![0.0; grid.nodes.len()];
    for c in members {
        for (acc, v) in mean.iter_mut().zip(c.sample(&grid.nodes, 0)?) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|x| *x /= m);
    let basis = BasisSpec::default_for(domain, grid.nodes.len())?;
    LeastSquaresFit::new(&grid.nodes, &basis)?.fit(&mean)
}

/// Functional clustering of arbitrary curves.
pub fn cluster_curves(
    curves: &[FunctionalCurve],
    max_clusters: usize,
    spec: &DistanceSpec,
    eps: f64,
    algorithm: Algorithm,
) -> Result<ClusterResult> {
    if curves.is_empty() {
        return Err(Error::Empty("no curves to cluster".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidSpec(format!("epsilon must be positive, got {eps}")));
    }
    let refs: Vec<&FunctionalCurve> = curves.iter().collect();
    let (grid, samples) = sample_all(&refs, spec)?;
    let d: DistanceMatrix = matrix_from_samples(&grid, &samples, spec.norm);
    let partition = match algorithm {
        Algorithm::Hierarchical => hierarchical_cluster(&d, max_clusters, eps)?,
        Algorithm::ConstrainedKmeans { seed } => {
            if spec.norm != Norm::L2 {
                return Err(Error::UnsupportedNorm(format!(
                    "constrained k-means needs the 2-norm, got {}",
                    spec.norm
                )));
            }
            let links = cannot_links(&d, eps);
            let vectors = scaled_vectors(&grid, samples);
            constrained_kmeans(&vectors, &links, max_clusters, seed)?
        }
        Algorithm::Nonfunctional => {
            return Err(Error::InvalidSpec(
                "the non-functional baseline clusters traces, not curves".into(),
            ))
        }
    };
    let centroids = (0..partition.k)
        .map(|c| {
            let members: Vec<&FunctionalCurve> =
                partition.members(c).into_iter().map(|i| &curves[i]).collect();
            centroid(&members, spec.intervals())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterResult {
        k: partition.k,
        assignment: partition.assignment,
        centroids,
        algorithm,
        epsilon: eps,
        spec: *spec,
    })
}

/// Clusters the timing curves of `hypertraces`.
pub fn fd_clustering(
    hypertraces: &[HyperTrace],
    max_clusters: usize,
    spec: &DistanceSpec,
    eps: f64,
    algorithm: Algorithm,
) -> Result<ClusterResult> {
    let curves: Vec<FunctionalCurve> = hypertraces.iter().map(|h| h.timing_curve.clone()).collect();
    cluster_curves(&curves, max_clusters, spec, eps, algorithm)
}

/// Pointwise baseline: for each public value the per-secret mean times are
/// clustered under `|t - t'|` with tolerance `eps`; returns the largest
/// cluster count over all public values.
pub fn nonfunctional_cluster(traces: &TraceSet, eps: f64) -> Result<usize> {
    let mut best = 1;
    for (_, means) in traces.means_by_public() {
        let values: Vec<f64> = means.into_iter().map(|(_, t)| t).collect();
        if values.len() < 2 {
            continue;
        }
        let d = DistanceMatrix::from_scalars(&values);
        let k = hierarchical_cluster(&d, values.len(), eps)?.k;
        best = best.max(k);
    }
    Ok(best)
}

//! The remote attacker: matches an offset-shifted timing function to known
//! observation classes using derivative distances.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterResult;
use crate::error::{Error, Result};
use crate::fda::{distance, fit_curve, BasisSpec, DistanceSpec, FunctionalCurve};

/// Timing samples collected against a remote server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteObservation {
    pub samples: Vec<(f64, f64)>,
    /// The attacker does not know the server's constant timing offset.
    pub assumed_offset_unknown: bool,
}

impl RemoteObservation {
    pub fn new(samples: Vec<(f64, f64)>) -> Self {
        RemoteObservation {
            samples,
            assumed_offset_unknown: true,
        }
    }

    /// Smallest and largest public value, if any samples exist.
    pub fn span(&self) -> Option<(f64, f64)> {
        let lo = self.samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let hi = self.samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Spline fit over `domain` with the default basis. The samples must
    /// span exactly that domain.
    pub fn fit(&self, domain: (f64, f64)) -> Result<FunctionalCurve> {
        let span = self
            .span()
            .ok_or_else(|| Error::Empty("observation has no samples".into()))?;
        let tol = 1e-9 * (1.0 + domain.0.abs().max(domain.1.abs()));
        if (span.0 - domain.0).abs() > tol || (span.1 - domain.1).abs() > tol {
            return Err(Error::DomainMismatch { left: span, right: domain });
        }
        let mut ys: Vec<f64> = self.samples.iter().map(|s| s.0).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        let basis = BasisSpec::default_for(domain, ys.len())?;
        fit_curve(&self.samples, &basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub cluster_id: usize,
    /// The two smallest distances differ by less than ε.
    pub ambiguous: bool,
    pub distances: Vec<f64>,
    pub leakage_bits: f64,
    pub kd_bound: f64,
}

/// `log2(k)`: bits revealed by distinguishing `k` classes.
pub fn leakage_bits(k: usize) -> f64 {
    (k.max(1) as f64).log2()
}

/// Upper bound `k * log2(n + 1)` after `n` measurements.
pub fn kd_bound(k: usize, n: usize) -> f64 {
    k as f64 * ((n + 1) as f64).log2()
}

fn check_spec(spec: &DistanceSpec) -> Result<()> {
    if spec.deriv_order == 0 {
        return Err(Error::ThreatModel(
            "remote matching needs a derivative distance (order >= 1): the server's timing offset is unknown"
                .into(),
        ));
    }
    spec.validate()
}

fn report(distances: Vec<f64>, label: impl Fn(usize) -> usize, k: usize, n: usize, eps: f64) -> MatchReport {
    let mut best = 0;
    for (j, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = j;
        }
    }
    let runner_up = distances
        .iter()
        .enumerate()
        .filter(|&(j, _)| label(j) != label(best))
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    MatchReport {
        cluster_id: label(best),
        ambiguous: runner_up - distances[best] < eps,
        distances,
        leakage_bits: leakage_bits(k),
        kd_bound: kd_bound(k, n),
    }
}

fn distinct_publics(obs: &RemoteObservation) -> usize {
    let mut ys: Vec<f64> = obs.samples.iter().map(|s| s.0).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    ys.len()
}

/// Nearest centroid under `spec`; ties go to the lowest cluster id.
pub fn match_remote(obs: &RemoteObservation, clusters: &ClusterResult, spec: &DistanceSpec) -> Result<MatchReport> {
    check_spec(spec)?;
    let domain = clusters
        .domain()
        .ok_or_else(|| Error::Empty("no clusters to match against".into()))?;
    let curve = obs.fit(domain)?;
    let distances = clusters
        .centroids
        .iter()
        .map(|c| distance(&curve, c, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(report(distances, |j| j, clusters.k, distinct_publics(obs), clusters.epsilon))
}

/// Variant matching against every member curve; the reported distances are
/// per member and `cluster_id` is the nearest member's cluster.
pub fn match_nearest_member(
    obs: &RemoteObservation,
    members: &[FunctionalCurve],
    clusters: &ClusterResult,
    spec: &DistanceSpec,
) -> Result<MatchReport> {
    check_spec(spec)?;
    if members.len() != clusters.assignment.len() {
        return Err(Error::InvalidSpec(format!(
            "{} member curves for {} assignments",
            members.len(),
            clusters.assignment.len()
        )));
    }
    let first = members
        .first()
        .ok_or_else(|| Error::Empty("no member curves".into()))?;
    let curve = obs.fit(first.domain())?;
    let distances = members
        .iter()
        .map(|c| distance(&curve, c, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(report(
        distances,
        |j| clusters.assignment[j],
        clusters.k,
        distinct_publics(obs),
        clusters.epsilon,
    ))
}

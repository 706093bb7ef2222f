//! Explaining clusters with program-internal features.
//!
//! Each auxiliary curve family is turned into one feature: a categorical
//! label from functional clustering, or the constant value itself when every
//! curve of the family is flat. A CART tree then maps features to clusters.

mod tree;

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_curves, Algorithm, ClusterResult};
use crate::error::{Error, Result};
use crate::fda::{distance, DistanceSpec, FunctionalCurve, Grid};
use crate::trace::HyperTrace;

pub use tree::{
    accuracy, cross_validate, learn_tree, predict, root_split, weighted_gini, DecisionTree,
    FeatureKind, LabeledRow, Node, Test, TreeParams,
};

/// Curves flatter than this (max minus min) count as constant.
pub const CONSTANT_TOL: f64 = 1e-9;
/// Largest residual of a linear fit for a label to be printed as `a*y + b`.
pub const LINEAR_TOL: f64 = 1e-6;

/// The feature derived from one auxiliary variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxFeature {
    pub name: String,
    pub kind: FeatureKind,
    /// Per hyper-trace: label id (categorical) or constant value (numeric).
    pub values: Vec<f64>,
    /// Display text per label id; empty for numeric features.
    pub label_text: Vec<String>,
}

impl AuxFeature {
    pub fn describe(&self, value: f64) -> String {
        match self.kind {
            FeatureKind::Numeric => value.to_string(),
            FeatureKind::Categorical => self
                .label_text
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("L{value}")),
        }
    }
}

fn snap(v: f64) -> f64 {
    let s = (v / CONSTANT_TOL).round() * CONSTANT_TOL;
    // Keep integers exact.
    if (s - s.round()).abs() < CONSTANT_TOL {
        s.round()
    } else {
        s
    }
}

fn format_coef(c: f64) -> String {
    let r = (c * 1e6).round() / 1e6;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

/// `a*y + b` when `curve` is linear to within [`LINEAR_TOL`].
pub fn linear_form(curve: &FunctionalCurve, grid_n: usize) -> Option<String> {
    let grid = Grid::new(curve.domain(), grid_n);
    let v = curve.sample(&grid.nodes, 0).ok()?;
    let n = v.len() as f64;
    let my = grid.nodes.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let sxx: f64 = grid.nodes.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = grid.nodes.iter().zip(&v).map(|(y, t)| (y - my) * (t - mv)).sum();
    let slope = sxy / sxx;
    let intercept = mv - slope * my;
    let resid = grid
        .nodes
        .iter()
        .zip(&v)
        .map(|(y, t)| (t - intercept - slope * y).abs())
        .fold(0.0, f64::max);
    if resid >= LINEAR_TOL {
        return None;
    }
    let zero = |c: f64| c.abs() < LINEAR_TOL;
    Some(match (zero(slope), zero(intercept)) {
        (true, _) => format_coef(intercept),
        (false, true) => format!("{}*y", format_coef(slope)),
        (false, false) if intercept < 0.0 => {
            format!("{}*y - {}", format_coef(slope), format_coef(-intercept))
        }
        (false, false) => format!("{}*y + {}", format_coef(slope), format_coef(intercept)),
    })
}

/// Labels the `aux_index`-th auxiliary curves of `hypertraces`.
///
/// Identical curves are clustered once. Label `j` is the hierarchical
/// cluster id under `spec` and `eps_aux` with at most `max_clusters` labels.
pub fn label_aux(
    hypertraces: &[HyperTrace],
    aux_index: usize,
    eps_aux: f64,
    max_clusters: usize,
    spec: &DistanceSpec,
) -> Result<AuxFeature> {
    let first = hypertraces
        .first()
        .ok_or_else(|| Error::Empty("no hyper-traces".into()))?;
    if aux_index >= first.aux_curves.len() {
        return Err(Error::InvalidSpec(format!(
            "aux index {aux_index} out of range ({} variables)",
            first.aux_curves.len()
        )));
    }
    let curves: Vec<&FunctionalCurve> = hypertraces.iter().map(|h| &h.aux_curves[aux_index]).collect();
    let name = format!("aux{aux_index}");
    if curves.iter().all(|c| c.value_range(spec.intervals()) < CONSTANT_TOL) {
        let values = curves
            .iter()
            .map(|c| c.eval(c.domain().0, 0).map(snap))
            .collect::<Result<Vec<_>>>()?;
        return Ok(AuxFeature {
            name,
            kind: FeatureKind::Numeric,
            values,
            label_text: Vec::new(),
        });
    }
    // Deduplicate by exact coefficients.
    let mut unique: Vec<FunctionalCurve> = Vec::new();
    let mut index_of = Vec::with_capacity(curves.len());
    for c in &curves {
        let pos = unique.iter().position(|u| u == *c).unwrap_or_else(|| {
            unique.push((*c).clone());
            unique.len() - 1
        });
        index_of.push(pos);
    }
    let bound = max_clusters.min(unique.len()).max(1);
    let result = cluster_curves(&unique, bound, spec, eps_aux, Algorithm::Hierarchical)?;
    let values = index_of.iter().map(|&u| result.assignment[u] as f64).collect();
    let label_text = result
        .centroids
        .iter()
        .enumerate()
        .map(|(j, c)| linear_form(c, spec.intervals()).unwrap_or_else(|| format!("L{j}")))
        .collect();
    Ok(AuxFeature {
        name,
        kind: FeatureKind::Categorical,
        values,
        label_text,
    })
}

/// Features for every auxiliary variable, named by `aux_names`.
pub fn aux_features(
    hypertraces: &[HyperTrace],
    aux_names: &[String],
    eps_aux: f64,
    max_clusters: usize,
    spec: &DistanceSpec,
) -> Result<Vec<AuxFeature>> {
    let r = hypertraces.first().map_or(0, |h| h.aux_curves.len());
    if aux_names.len() != r {
        return Err(Error::InvalidSpec(format!(
            "{} aux names for {r} aux variables",
            aux_names.len()
        )));
    }
    (0..r)
        .map(|a| {
            let mut f = label_aux(hypertraces, a, eps_aux, max_clusters, spec)?;
            f.name = aux_names[a].clone();
            Ok(f)
        })
        .collect()
}

/// Training rows: one per hyper-trace, targets from `clusters`.
pub fn labeled_rows(hypertraces: &[HyperTrace], features: &[AuxFeature], clusters: &ClusterResult) -> Vec<LabeledRow> {
    hypertraces
        .iter()
        .enumerate()
        .map(|(i, h)| LabeledRow {
            secret: h.secret.clone(),
            features: features.iter().map(|f| f.values[i]).collect(),
            target: clusters.assignment[i],
        })
        .collect()
}

/// `Ψ = (F, Φ)`: centroid curves plus the tree realizing the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminant {
    pub clusters: ClusterResult,
    pub tree: DecisionTree,
    pub features: Vec<AuxFeature>,
}

impl Discriminant {
    /// Number of timing functions in the discriminant.
    pub fn size(&self) -> usize {
        self.clusters.k
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn tree_text(&self) -> String {
        let names = self.feature_names();
        self.tree.to_text(&names, &|f, v| self.features[f].describe(v))
    }

    pub fn tree_dot(&self) -> String {
        let names = self.feature_names();
        self.tree.to_dot(&names, &|f, v| self.features[f].describe(v))
    }
}

/// Learns the tree for already-clustered hyper-traces.
pub fn learn_discriminant(
    hypertraces: &[HyperTrace],
    clusters: &ClusterResult,
    features: Vec<AuxFeature>,
    params: &TreeParams,
) -> Result<(Discriminant, Vec<LabeledRow>)> {
    let rows = labeled_rows(hypertraces, &features, clusters);
    let kinds: Vec<FeatureKind> = features.iter().map(|f| f.kind).collect();
    let tree = learn_tree(&rows, &kinds, params)?;
    Ok((
        Discriminant {
            clusters: clusters.clone(),
            tree,
            features,
        },
        rows,
    ))
}

/// Mean prediction error: the distance from each timing curve to the
/// centroid of the cluster its features route to. `features[i]` are the
/// feature values of `hypertraces[i]`.
pub fn discriminant_error(
    hypertraces: &[HyperTrace],
    features: &[Vec<f64>],
    disc: &Discriminant,
    spec: &DistanceSpec,
) -> Result<f64> {
    if hypertraces.is_empty() {
        return Err(Error::Empty("no hyper-traces".into()));
    }
    if features.len() != hypertraces.len() {
        return Err(Error::InvalidSpec(format!(
            "{} feature rows for {} hyper-traces",
            features.len(),
            hypertraces.len()
        )));
    }
    let mut total = 0.0;
    for (h, x) in hypertraces.iter().zip(features) {
        let j = disc.tree.predict(x);
        let centroid = disc.clusters.centroids.get(j).ok_or_else(|| {
            Error::InvalidSpec(format!("tree predicts cluster {j} but only {} exist", disc.clusters.k))
        })?;
        total += distance(&h.timing_curve, centroid, spec)?;
    }
    Ok(total / hypertraces.len() as f64)
}

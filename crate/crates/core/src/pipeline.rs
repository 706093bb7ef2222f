//! End-to-end analysis: traces in, report bundle out.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attacker::{kd_bound, leakage_bits};
use crate::benchgen::{generate_default, BenchModel};
use crate::cluster::{fd_clustering, nonfunctional_cluster, Algorithm, ClusterResult};
use crate::discriminant::{aux_features, cross_validate, learn_discriminant, Discriminant, LabeledRow, TreeParams};
use crate::error::Error;
use crate::fda::{DistanceSpec, Grid};
use crate::mitigation::{mitigate_traces, MitigationScheme};
use crate::trace::{build_hypertraces, default_basis, load_traces_auto, HyperTrace, TraceSet};

pub const DEFAULT_FOLDS: usize = 20;
pub const NONINTERFERENCE_NOTE: &str = "noninterference holds for the given inputs";

/// Where traces come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Model(BenchModel),
    Traces(Box<TraceSet>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: TraceSource,
    pub eps: f64,
    /// Tolerance for auxiliary curves; defaults to `eps`.
    pub eps_aux: Option<f64>,
    pub spec: DistanceSpec,
    /// Cluster bound; defaults to the number of distinct secrets.
    pub max_clusters: Option<usize>,
    pub algorithm: Algorithm,
    pub folds: usize,
    pub mitigation: Option<MitigationScheme>,
    pub seed: u64,
    /// Basis size override; the default depends on the number of publics.
    pub n_basis: Option<usize>,
    pub tree: TreeParams,
}

impl PipelineConfig {
    pub fn new(source: TraceSource, eps: f64, spec: DistanceSpec) -> Self {
        PipelineConfig {
            source,
            eps,
            eps_aux: None,
            spec,
            max_clusters: None,
            algorithm: Algorithm::Hierarchical,
            folds: DEFAULT_FOLDS,
            mitigation: None,
            seed: 0,
            n_basis: None,
            tree: TreeParams::default(),
        }
    }

    fn validate(&self) -> crate::Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidSpec(format!("eps must be positive, got {}", self.eps)));
        }
        if let Some(e) = self.eps_aux {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidSpec(format!("eps_aux must be positive, got {e}")));
            }
        }
        if self.max_clusters == Some(0) {
            return Err(Error::InvalidSpec("max clusters must be at least 1".into()));
        }
        self.spec.validate()
    }
}

/// Pipeline stages, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Load,
    Mitigate,
    Fit,
    Cluster,
    Explain,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(Value::as_str).unwrap_or("?"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at<T>(stage: Stage, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage, source })
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub traces: TraceSet,
    pub hypertraces: Vec<HyperTrace>,
    pub clusters: ClusterResult,
    /// Pointwise baseline class count at the same `eps`.
    pub nonfunctional_k: usize,
    pub discriminant: Option<Discriminant>,
    pub rows: Vec<LabeledRow>,
    pub accuracy: Option<f64>,
    pub training_accuracy: Option<f64>,
    pub folds_used: Option<usize>,
    pub n_publics: usize,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(Stage, f64)>,
    pub config: PipelineConfig,
}

impl PipelineOutcome {
    pub fn k(&self) -> usize {
        self.clusters.k
    }

    pub fn tree_height(&self) -> Option<usize> {
        self.discriminant.as_ref().map(|d| d.tree.height())
    }

    pub fn leaf_count(&self) -> Option<usize> {
        self.discriminant.as_ref().map(|d| d.tree.leaf_count())
    }

    pub fn stage_seconds(&self, stage: Stage) -> f64 {
        self.timings.iter().filter(|t| t.0 == stage).map(|t| t.1).sum()
    }

    /// Deterministic summary; floats rounded to 9 decimals.
    pub fn report(&self) -> Value {
        let c = &self.config;
        let sizes = self.clusters.cluster_sizes();
        let v = json!({
            "k": self.clusters.k,
            "nonfunctional_k": self.nonfunctional_k,
            "epsilon": c.eps,
            "eps_aux": c.eps_aux.unwrap_or(c.eps),
            "spec": {
                "deriv_order": c.spec.deriv_order,
                "norm": c.spec.norm.to_string(),
                "grid_n": c.spec.grid_n,
            },
            "algorithm": self.clusters.algorithm.to_string(),
            "mitigation": c.mitigation,
            "n_secrets": self.hypertraces.len(),
            "n_publics": self.n_publics,
            "n_traces": self.traces.len(),
            "n_basis": self.hypertraces.first().map(|h| h.timing_curve.basis().n_basis()),
            "cluster_sizes": sizes,
            "noninterference": self.clusters.k == 1,
            "note": if self.clusters.k == 1 { Some(NONINTERFERENCE_NOTE) } else { None },
            "accuracy": self.accuracy,
            "training_accuracy": self.training_accuracy,
            "cv_folds": self.folds_used,
            "tree_height": self.tree_height(),
            "leaf_count": self.leaf_count(),
            "discriminant_size": self.discriminant.as_ref().map(Discriminant::size),
            "leakage_bits": leakage_bits(self.clusters.k),
            "kd_bound": kd_bound(self.clusters.k, self.n_publics),
        });
        round_floats(v)
    }

    pub fn timings_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (s, t) in &self.timings {
            m.insert(s.to_string(), json!(t));
        }
        Value::Object(m)
    }
}

/// Rounds every float in `v` to 9 decimal places.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let r: f64 = format!("{x:.9}").parse().unwrap_or(x);
            json!(r)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Runs load → mitigate → fit → cluster → explain.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, StageError> {
    at(Stage::Config, config.validate())?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: Stage, timings: &mut Vec<(Stage, f64)>| {
        timings.push((stage, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let traces = at(
        Stage::Load,
        match &config.source {
            TraceSource::File(p) => load_traces_auto(p),
            TraceSource::Model(m) => generate_default(m),
            TraceSource::Traces(t) => Ok((**t).clone()),
        },
    )?;
    lap(Stage::Load, &mut timings);

    let traces = match &config.mitigation {
        Some(m) => {
            let t = at(Stage::Mitigate, mitigate_traces(&traces, m))?;
            lap(Stage::Mitigate, &mut timings);
            t
        }
        None => traces,
    };

    let basis = at(Stage::Fit, default_basis(&traces, config.n_basis))?;
    let hypertraces = at(Stage::Fit, build_hypertraces(&traces, &basis))?;
    let n_publics = traces.means_by_public().len();
    lap(Stage::Fit, &mut timings);

    let bound = config.max_clusters.unwrap_or(hypertraces.len());
    let clusters = at(
        Stage::Cluster,
        fd_clustering(&hypertraces, bound, &config.spec, config.eps, config.algorithm),
    )?;
    let nonfunctional_k = at(Stage::Cluster, nonfunctional_cluster(&traces, config.eps))?;
    lap(Stage::Cluster, &mut timings);

    let mut outcome = PipelineOutcome {
        traces,
        hypertraces,
        clusters,
        nonfunctional_k,
        discriminant: None,
        rows: Vec::new(),
        accuracy: None,
        training_accuracy: None,
        folds_used: None,
        n_publics,
        timings: Vec::new(),
        config: config.clone(),
    };
    if outcome.clusters.k > 1 {
        let eps_aux = config.eps_aux.unwrap_or(config.eps);
        let features = at(
            Stage::Explain,
            aux_features(
                &outcome.hypertraces,
                outcome.traces.aux_names(),
                eps_aux,
                outcome.hypertraces.len(),
                &config.spec,
            ),
        )?;
        let (disc, rows) = at(
            Stage::Explain,
            learn_discriminant(&outcome.hypertraces, &outcome.clusters, features, &config.tree),
        )?;
        outcome.training_accuracy = Some(crate::discriminant::accuracy(&disc.tree, &rows));
        let folds = config.folds.min(rows.len());
        if folds >= 2 {
            let kinds: Vec<_> = disc.features.iter().map(|f| f.kind).collect();
            outcome.accuracy = Some(at(
                Stage::Explain,
                cross_validate(&rows, &kinds, folds, config.seed, &config.tree),
            )?);
            outcome.folds_used = Some(folds);
        }
        outcome.discriminant = Some(disc);
        outcome.rows = rows;
        lap(Stage::Explain, &mut timings);
    }
    outcome.timings = timings;
    Ok(outcome)
}

/// Cluster assignment plus centroids, as stored in `centroids.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub secrets: Vec<Vec<f64>>,
    pub clusters: ClusterResult,
}

fn write(dir: &Path, name: &str, text: impl AsRef<[u8]>) -> crate::Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];
const PLOT_INTERVALS: usize = 128;

fn curves_csv(o: &PipelineOutcome) -> crate::Result<String> {
    let mut out = String::from("secret,cluster,y,time\n");
    for (i, h) in o.hypertraces.iter().enumerate() {
        let grid = Grid::new(h.domain(), PLOT_INTERVALS);
        let values = h.timing_curve.sample(&grid.nodes, 0)?;
        let id = secret_label(&h.secret);
        for (y, v) in grid.nodes.iter().zip(values) {
            out.push_str(&format!("{id},{},{y},{v}\n", o.clusters.assignment[i]));
        }
    }
    Ok(out)
}

fn curves_svg(o: &PipelineOutcome) -> crate::Result<String> {
    let (w, h, pad) = (800.0, 500.0, 40.0);
    let mut series = Vec::with_capacity(o.hypertraces.len());
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for ht in &o.hypertraces {
        let grid = Grid::new(ht.domain(), PLOT_INTERVALS);
        let values = ht.timing_curve.sample(&grid.nodes, 0)?;
        for &v in &values {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        series.push((grid.nodes, values));
    }
    if vmax <= vmin {
        vmax = vmin + 1.0;
    }
    let (ylo, yhi) = o.hypertraces[0].domain();
    let sx = |y: f64| pad + (y - ylo) / (yhi - ylo) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - vmin) / (vmax - vmin) * (h - 2.0 * pad);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">timing curves, k = {}</text>\n\
         <text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">public input [{ylo}, {yhi}]; time [{vmin:.6}, {vmax:.6}] s</text>\n",
        o.clusters.k,
        h - 10.0
    );
    for (i, (ys, vs)) in series.iter().enumerate() {
        let color = PALETTE[o.clusters.assignment[i] % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .zip(vs)
            .map(|(&y, &v)| format!("{:.2},{:.2}", sx(y), sy(v)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" stroke-opacity=\"0.7\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn secret_label(s: &[f64]) -> String {
    s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the report bundle into `dir` (created if missing).
pub fn write_bundle(o: &PipelineOutcome, dir: &Path) -> Result<(), StageError> {
    let w = || -> crate::Result<()> {
        fs::create_dir_all(dir)?;
        let names = o.traces.secret_names();
        let mut csv = names.iter().map(|n| format!("secret:{n}")).collect::<Vec<_>>().join(",");
        csv.push_str(",cluster\n");
        for (h, c) in o.hypertraces.iter().zip(&o.clusters.assignment) {
            let cols: Vec<String> = h.secret.iter().map(|x| x.to_string()).collect();
            csv.push_str(&format!("{},{c}\n", cols.join(",")));
        }
        write(dir, "clusters.csv", csv)?;
        let file = ClusterFile {
            secrets: o.hypertraces.iter().map(|h| h.secret.clone()).collect(),
            clusters: o.clusters.clone(),
        };
        write(dir, "centroids.json", serde_json::to_string_pretty(&file)? + "\n")?;
        match &o.discriminant {
            Some(d) => {
                write(dir, "tree.txt", d.tree_text())?;
                write(dir, "tree.dot", d.tree_dot())?;
            }
            None => {
                write(dir, "tree.txt", format!("N/A: {NONINTERFERENCE_NOTE}\n"))?;
                write(dir, "tree.dot", "digraph tree {\n}\n")?;
            }
        }
        write(dir, "report.json", serde_json::to_string_pretty(&o.report())? + "\n")?;
        write(dir, "timings.json", serde_json::to_string_pretty(&o.timings_json())? + "\n")?;
        write(dir, "curves.csv", curves_csv(o)?)?;
        write(dir, "curves.svg", curves_svg(o)?)?;
        Ok(())
    };
    at(Stage::Write, w())
}

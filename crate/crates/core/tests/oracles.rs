//! Frozen end-to-end examples on generated benchmarks.

use funchan::benchgen::{generate_default, BenchKind, BenchModel};
use funchan::cluster::{fd_clustering, nonfunctional_cluster, Algorithm};
use funchan::discriminant::{aux_features, learn_tree, root_split, FeatureKind, LabeledRow, Test, TreeParams};
use funchan::fda::{DistanceSpec, Norm};
use funchan::pipeline::{run_pipeline, write_bundle, PipelineConfig, TraceSource};
use funchan::trace::{build_hypertraces, default_basis, load_traces, save_traces, HyperTrace, TraceFormat, TraceSet};

fn noiseless(kind: BenchKind) -> TraceSet {
    generate_default(&BenchModel::new(kind).with_noise(0.0)).unwrap()
}

fn hypertraces(t: &TraceSet, n_basis: Option<usize>) -> Vec<HyperTrace> {
    build_hypertraces(t, &default_basis(t, n_basis).unwrap()).unwrap()
}

fn range(h: &HyperTrace) -> f64 {
    let v = h.timing_curve.sample(&(0..=190).map(|i| 1.0 + i as f64 * 0.1).collect::<Vec<_>>(), 0).unwrap();
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn zigzag_hypertraces_split_evenly() {
    let h = hypertraces(&noiseless(BenchKind::Zigzag), None);
    assert_eq!(h.len(), 100);
    let flat: Vec<&HyperTrace> = h.iter().filter(|x| range(x) < 1e-9).collect();
    assert_eq!(flat.len(), 50);
    for x in &flat {
        assert_eq!(x.secret[0] as i64 % 2, 1);
        assert!((x.timing_curve.eval(7.0, 0).unwrap() - 0.002).abs() < 1e-9);
    }
    assert!(h.iter().filter(|x| range(x) > 1e-4).count() == 50);
}

#[test]
fn zigzag_class_counts_without_noise() {
    let t = noiseless(BenchKind::Zigzag);
    let h = hypertraces(&t, None);
    let k = |i, p| fd_clustering(&h, 100, &DistanceSpec::new(i, p), 0.001, Algorithm::Hierarchical).unwrap().k;
    assert_eq!(k(1, Norm::Inf), 2);
    assert_eq!(k(0, Norm::Inf), 1);
    assert_eq!(nonfunctional_cluster(&t, 0.001).unwrap(), 1);
}

#[test]
fn process_bid_curves_step_at_the_secret() {
    let t = noiseless(BenchKind::ProcessBid {
        t_fast: 0.001,
        t_record: 0.002,
    });
    assert_eq!(nonfunctional_cluster(&t, 0.001).unwrap(), 2);
    let h = hypertraces(&t, Some(100));
    for x in h.iter().filter(|x| (10.0..=90.0).contains(&x.secret[0])) {
        let s = x.secret[0];
        // With one basis function per sample the fit interpolates, so the
        // jump happens between the neighbouring samples s - 1 and s.
        let below = x.timing_curve.eval(s - 1.0, 0).unwrap();
        let at = x.timing_curve.eval(s, 0).unwrap();
        assert!((below - 0.001).abs() < 1e-9, "s = {s}: {below}");
        assert!((at - 0.003).abs() < 1e-9, "s = {s}: {at}");
    }
}

#[test]
fn branch_loop_file_round_trips_bit_identically() {
    let t = generate_default(&BenchModel::new(BenchKind::BranchLoop { variants: 1 })).unwrap();
    assert_eq!(t.distinct_secrets().len(), 36);
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("bl.csv", TraceFormat::Delimited), ("bl.json", TraceFormat::Structured)] {
        let a = dir.path().join(name);
        let b = dir.path().join(format!("again-{name}"));
        save_traces(&t, &a, format).unwrap();
        let back = load_traces(&a, format).unwrap();
        // The structured format keys aux values by name, so only the
        // delimited format preserves column order and names.
        if format == TraceFormat::Delimited {
            assert_eq!(back, t);
        }
        save_traces(&back, &b, format).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn jetty_loop_counts_get_twenty_labels() {
    let t = noiseless(BenchKind::StrcmpJetty { a: 0.02, b: 0.005 });
    let h = hypertraces(&t, None);
    let features = aux_features(&h, t.aux_names(), 0.001, h.len(), &DistanceSpec::new(0, Norm::L2)).unwrap();
    let loop_count = features.iter().find(|f| f.name == "stringEquals_bblock_118").unwrap();
    assert_eq!(loop_count.kind, FeatureKind::Categorical);
    let mut labels = loop_count.values.clone();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    assert_eq!(labels.len(), 20);
    for (a, b) in h.iter().zip(&loop_count.values) {
        for (c, d) in h.iter().zip(&loop_count.values) {
            assert_eq!(a.secret[0] == c.secret[0], b == d);
        }
    }
}

#[test]
fn six_row_root_split() {
    let rows: Vec<LabeledRow> = [(1.0, 0.0, 0), (2.0, 0.0, 0), (3.0, 1.0, 0), (4.0, 1.0, 1), (5.0, 2.0, 1), (6.0, 2.0, 1)]
        .iter()
        .map(|&(a, b, t)| LabeledRow {
            secret: vec![a],
            features: vec![a, b],
            target: t,
        })
        .collect();
    let tree = learn_tree(&rows, &[FeatureKind::Numeric, FeatureKind::Categorical], &TreeParams::default()).unwrap();
    assert_eq!(root_split(&tree), Some((0, Test::AtMost(3.5))));
    assert_eq!(tree.height(), 1);
}

fn zigzag_config(source: TraceSource) -> PipelineConfig {
    PipelineConfig::new(source, 0.001, DistanceSpec::new(1, Norm::Inf))
}

#[test]
fn pipeline_report_is_deterministic() {
    let model = BenchModel::new(BenchKind::Zigzag).with_noise(0.0);
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let o = run_pipeline(&zigzag_config(TraceSource::Model(model.clone()))).unwrap();
        assert_eq!(o.k(), 2);
        assert_eq!((o.tree_height(), o.leaf_count(), o.accuracy), (Some(1), Some(2), Some(1.0)));
        write_bundle(&o, &out).unwrap();
        reports.push(std::fs::read(out.join("report.json")).unwrap());
        let csv = std::fs::read_to_string(out.join("clusters.csv")).unwrap();
        let mut ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ids.len(), 100);
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn branch_loop_pipeline_finds_three_or_four_classes() {
    let model = BenchModel::new(BenchKind::BranchLoop { variants: 1 });
    let o = run_pipeline(&PipelineConfig::new(TraceSource::Model(model), 0.1, DistanceSpec::new(1, Norm::L2))).unwrap();
    assert!((3..=4).contains(&o.k()), "k = {}", o.k());
}

//! Property checks shared by the proptest suite and the acceptance runner.
//! Each returns `Err(description)` on the first violation.
#![allow(dead_code)]

use funchan::cluster::{cannot_links, hierarchical_cluster, Dendrogram, DistanceMatrix};
use funchan::discriminant::{learn_tree, root_split, weighted_gini, FeatureKind, LabeledRow, Test, TreeParams};
use funchan::fda::{distance, fit_curve, make_basis, DistanceSpec, FunctionalCurve, Norm};
use funchan::mitigation::{double_scheme, quantize};

pub const METRIC_TOL: f64 = 1e-9;
pub const POLY_TOL: f64 = 1e-8;
pub const FD_REL_TOL: f64 = 1e-4;
pub const OFFSET_TOL: f64 = 1e-9;

pub const NORMS: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Inf];

pub fn curve(domain: (f64, f64), coefficients: &[f64]) -> FunctionalCurve {
    let basis = make_basis(domain, coefficients.len(), 4).unwrap();
    FunctionalCurve::new(basis, coefficients.to_vec()).unwrap()
}

pub fn metric_axioms(a: &FunctionalCurve, b: &FunctionalCurve, c: &FunctionalCurve) -> Result<(), String> {
    for i in 0..=2 {
        for p in NORMS {
            let s = DistanceSpec::new(i, p);
            let d = |x: &FunctionalCurve, y: &FunctionalCurve| distance(x, y, &s).unwrap();
            let (ab, ba, bc, ac, aa) = (d(a, b), d(b, a), d(b, c), d(a, c), d(a, a));
            if aa.abs() > METRIC_TOL {
                return Err(format!("{s}: d(a,a) = {aa}"));
            }
            if ab < 0.0 || (ab - ba).abs() > METRIC_TOL {
                return Err(format!("{s}: d(a,b) = {ab}, d(b,a) = {ba}"));
            }
            if ac > ab + bc + METRIC_TOL {
                return Err(format!("{s}: triangle {ac} > {ab} + {bc}"));
            }
        }
    }
    Ok(())
}

/// Fits samples of a cubic and compares against it on a dense grid.
pub fn polynomial_reproduction(coef: [f64; 4], n_basis: usize, n_points: usize) -> Result<(), String> {
    let poly = |y: f64| coef[0] + y * (coef[1] + y * (coef[2] + y * coef[3]));
    let basis = make_basis((0.0, 1.0), n_basis, 4).unwrap();
    let pts: Vec<_> = (0..n_points)
        .map(|k| k as f64 / (n_points - 1) as f64)
        .map(|y| (y, poly(y)))
        .collect();
    let f = fit_curve(&pts, &basis).map_err(|e| e.to_string())?;
    for k in 0..=200 {
        let y = k as f64 / 200.0;
        let err = (f.eval(y, 0).unwrap() - poly(y)).abs();
        if err > POLY_TOL {
            return Err(format!("|f({y}) - p({y})| = {err}"));
        }
    }
    Ok(())
}

/// Analytic first derivative against a central difference at interior `y`.
pub fn derivative_matches_fd(f: &FunctionalCurve, y: f64) -> Result<(), String> {
    let h = 1e-5;
    let fd = (f.eval(y + h, 0).unwrap() - f.eval(y - h, 0).unwrap()) / (2.0 * h);
    let an = f.eval(y, 1).unwrap();
    let rel = (fd - an).abs() / an.abs().max(1.0);
    if rel > FD_REL_TOL {
        return Err(format!("f'({y}) = {an}, difference quotient {fd}"));
    }
    Ok(())
}

pub fn offset_invariance(f: &FunctionalCurve, c: f64) -> Result<(), String> {
    let g = f.shifted(c);
    for p in NORMS {
        let d = distance(f, &g, &DistanceSpec::new(1, p)).unwrap();
        if d > OFFSET_TOL {
            return Err(format!("d_1,{p}(f, f + {c}) = {d}"));
        }
    }
    Ok(())
}

pub fn matrix_from_points(points: &[(f64, f64)]) -> DistanceMatrix {
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    DistanceMatrix::from_rows(&rows).unwrap()
}

/// Output satisfies every cannot-link and equals the smallest feasible cut
/// found by trying every `k`.
pub fn hierarchical_matches_brute_force(d: &DistanceMatrix, eps: f64) -> Result<(), String> {
    let n = d.len();
    let links = cannot_links(d, eps);
    let got = hierarchical_cluster(d, n, eps).map_err(|e| e.to_string())?;
    if !links.is_satisfied_by(&got.assignment) {
        return Err(format!("cannot-link violated by {:?}", got.assignment));
    }
    let dendrogram = Dendrogram::complete_linkage(d);
    let brute = (1..=n)
        .find(|&k| links.is_satisfied_by(&dendrogram.cut(k).assignment))
        .expect("singletons are always feasible");
    if got.k != brute {
        return Err(format!("k = {}, brute force {brute}", got.k));
    }
    Ok(())
}

/// The learner's root split attains the minimum weighted Gini over every
/// candidate test.
pub fn gini_root_is_optimal(rows: &[LabeledRow], kinds: &[FeatureKind]) -> Result<(), String> {
    let tree = learn_tree(rows, kinds, &TreeParams::default()).map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    for (f, kind) in kinds.iter().enumerate() {
        let mut values: Vec<f64> = rows.iter().map(|r| r.features[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &v in &values {
            let test = match kind {
                FeatureKind::Categorical => Test::Equals(v),
                FeatureKind::Numeric => Test::AtMost(v),
            };
            let passing = rows.iter().filter(|r| test.passes(r.features[f])).count();
            if passing == 0 || passing == rows.len() {
                continue;
            }
            best = best.min(weighted_gini(rows, f, test));
        }
    }
    let parent = weighted_gini(rows, 0, Test::AtMost(f64::INFINITY));
    match root_split(&tree) {
        Some((f, t)) => {
            let g = weighted_gini(rows, f, t);
            if (g - best).abs() > 1e-12 {
                return Err(format!("root gini {g}, exhaustive {best}"));
            }
        }
        None => {
            let pure = rows.iter().all(|r| r.target == rows[0].target);
            if !pure && best < parent - 1e-12 {
                return Err(format!("no split chosen but {best} < {parent}"));
            }
        }
    }
    Ok(())
}

pub fn quantize_is_delayed_multiple(t: f64, q: f64) -> Result<(), String> {
    let r = quantize(t, q);
    let m = (r / q).round();
    let ulp = f64::EPSILON * r.abs().max(f64::MIN_POSITIVE);
    if (r - m * q).abs() > ulp || m < 1.0 {
        return Err(format!("quantize({t}, {q}) = {r} is not a multiple"));
    }
    if r < t {
        return Err(format!("quantize({t}, {q}) = {r} releases early"));
    }
    Ok(())
}

pub fn double_scheme_delays(times: &[f64], t0: f64) -> Result<(), String> {
    let out = double_scheme(times, t0);
    if out.len() != times.len() {
        return Err("length changed".into());
    }
    for (t, r) in times.iter().zip(&out) {
        if r < t {
            return Err(format!("released {r} before {t}"));
        }
    }
    Ok(())
}

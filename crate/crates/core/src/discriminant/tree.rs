//! CART classification trees over auxiliary-variable features.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature column is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Label ids compared by equality.
    Categorical,
    /// Real values compared against thresholds.
    Numeric,
}

/// One training example: a secret's feature values and its cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub secret: Vec<f64>,
    pub features: Vec<f64>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Test {
    Equals(f64),
    AtMost(f64),
}

impl Test {
    pub fn passes(&self, x: f64) -> bool {
        match *self {
            Test::Equals(v) => x == v,
            Test::AtMost(c) => x <= c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        test: Test,
        yes: Box<Node>,
        no: Box<Node>,
    },
    Leaf {
        cluster: usize,
        histogram: Vec<usize>,
    },
}

impl Node {
    fn height(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { yes, no, .. } => 1 + yes.height().max(no.height()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { yes, no, .. } => yes.leaves() + no.leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub kinds: Vec<FeatureKind>,
    pub n_classes: usize,
}

impl DecisionTree {
    /// A tree that always answers `cluster`.
    pub fn leaf(cluster: usize, n_classes: usize, kinds: Vec<FeatureKind>) -> DecisionTree {
        let histogram = vec![0; n_classes.max(cluster + 1)];
        DecisionTree {
            root: Node::Leaf { cluster, histogram },
            kinds,
            n_classes: n_classes.max(cluster + 1),
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { cluster, .. } => return *cluster,
                Node::Split { feature, test, yes, no } => {
                    node = if test.passes(features[*feature]) { yes } else { no };
                }
            }
        }
    }

    /// Feature tested at the root, if any.
    pub fn root_feature(&self) -> Option<usize> {
        match &self.root {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        }
    }

    /// Indented text rendering. `label` maps `(feature, value)` of an
    /// equality test to display text.
    pub fn to_text(&self, names: &[String], label: &dyn Fn(usize, f64) -> String) -> String {
        let mut out = String::new();
        self.text_node(&self.root, names, label, 0, &mut out);
        out
    }

    fn text_node(
        &self,
        node: &Node,
        names: &[String],
        label: &dyn Fn(usize, f64) -> String,
        depth: usize,
        out: &mut String,
    ) {
        let pad = "  ".repeat(depth);
        match node {
            Node::Leaf { cluster, histogram } => {
                let support: usize = histogram.iter().sum();
                let _ = writeln!(out, "{pad}cluster {cluster} (support {support})");
            }
            Node::Split { feature, test, yes, no } => {
                let (pos, neg) = describe(names, label, *feature, test);
                let _ = writeln!(out, "{pad}{pos}:");
                self.text_node(yes, names, label, depth + 1, out);
                let _ = writeln!(out, "{pad}{neg}:");
                self.text_node(no, names, label, depth + 1, out);
            }
        }
    }

    /// Graphviz rendering.
    pub fn to_dot(&self, names: &[String], label: &dyn Fn(usize, f64) -> String) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box];\n");
        let mut next = 0usize;
        dot_node(&self.root, names, label, &mut next, &mut out);
        out.push_str("}\n");
        out
    }
}

fn feature_name(names: &[String], f: usize) -> String {
    names.get(f).cloned().unwrap_or_else(|| format!("x{f}"))
}

fn describe(
    names: &[String],
    label: &dyn Fn(usize, f64) -> String,
    feature: usize,
    test: &Test,
) -> (String, String) {
    let name = feature_name(names, feature);
    match *test {
        Test::Equals(v) => {
            let l = label(feature, v);
            (format!("{name} = {l}"), format!("{name} != {l}"))
        }
        Test::AtMost(c) => (format!("{name} <= {c}"), format!("{name} > {c}")),
    }
}

fn dot_node(
    node: &Node,
    names: &[String],
    label: &dyn Fn(usize, f64) -> String,
    next: &mut usize,
    out: &mut String,
) -> usize {
    let id = *next;
    *next += 1;
    match node {
        Node::Leaf { cluster, histogram } => {
            let support: usize = histogram.iter().sum();
            let _ = writeln!(
                out,
                "  n{id} [label=\"cluster {cluster}\\nsupport {support}\", style=rounded];"
            );
        }
        Node::Split { feature, test, yes, no } => {
            let (pos, neg) = describe(names, label, *feature, test);
            let _ = writeln!(out, "  n{id} [label=\"{}\"];", feature_name(names, *feature).replace('"', "'"));
            let y = dot_node(yes, names, label, next, out);
            let n = dot_node(no, names, label, next, out);
            let edge = |s: &str| s.split_once(' ').map_or(s, |x| x.1).replace('"', "'");
            let _ = writeln!(out, "  n{id} -> n{y} [label=\"{}\"];", edge(&pos));
            let _ = writeln!(out, "  n{id} -> n{n} [label=\"{}\"];", edge(&neg));
        }
    }
    id
}

/// Candidate split with its exact score `num / den`, where the score is
/// `sum cL^2 / nL + sum cR^2 / nR` (larger means lower weighted Gini).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    test: Test,
    num: u128,
    den: u128,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.num * b.den > b.num * a.den
}

fn sum_sq(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

fn histogram(rows: &[&LabeledRow], n_classes: usize) -> Vec<usize> {
    let mut h = vec![0; n_classes];
    for r in rows {
        h[r.target] += 1;
    }
    h
}

fn majority(h: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in h.iter().enumerate() {
        if n > h[best] {
            best = c;
        }
    }
    best
}

fn distinct_sorted(rows: &[&LabeledRow], f: usize) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().map(|r| r.features[f]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Best split by Gini decrease; `None` when no split has positive gain or
/// satisfies `min_leaf`.
fn best_split(
    rows: &[&LabeledRow],
    kinds: &[FeatureKind],
    n_classes: usize,
    min_leaf: usize,
) -> Option<Candidate> {
    let n = rows.len();
    let parent = Candidate {
        feature: 0,
        test: Test::AtMost(0.0),
        num: sum_sq(&histogram(rows, n_classes)),
        den: n as u128,
    };
    let mut best: Option<Candidate> = None;
    for (f, kind) in kinds.iter().enumerate() {
        let values = distinct_sorted(rows, f);
        if values.len() < 2 {
            continue;
        }
        let tests: Vec<Test> = match kind {
            FeatureKind::Categorical => values.iter().map(|&v| Test::Equals(v)).collect(),
            FeatureKind::Numeric => values
                .windows(2)
                .map(|w| Test::AtMost(w[0] + (w[1] - w[0]) / 2.0))
                .collect(),
        };
        for test in tests {
            let mut left = vec![0usize; n_classes];
            let mut right = vec![0usize; n_classes];
            for r in rows {
                if test.passes(r.features[f]) {
                    left[r.target] += 1;
                } else {
                    right[r.target] += 1;
                }
            }
            let nl: usize = left.iter().sum();
            let nr = n - nl;
            if nl < min_leaf.max(1) || nr < min_leaf.max(1) {
                continue;
            }
            let (nl, nr) = (nl as u128, nr as u128);
            let cand = Candidate {
                feature: f,
                test,
                num: sum_sq(&left) * nr + sum_sq(&right) * nl,
                den: nl * nr,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    best.filter(|b| better(b, &parent))
}

fn grow(
    rows: Vec<&LabeledRow>,
    kinds: &[FeatureKind],
    n_classes: usize,
    params: &TreeParams,
    depth: usize,
) -> Node {
    let h = histogram(&rows, n_classes);
    let pure = h.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_done = params.max_depth.is_some_and(|d| depth >= d);
    let leaf = |h: Vec<usize>| Node::Leaf {
        cluster: majority(&h),
        histogram: h,
    };
    if pure || depth_done {
        return leaf(h);
    }
    let Some(split) = best_split(&rows, kinds, n_classes, params.min_leaf) else {
        return leaf(h);
    };
    let (yes, no): (Vec<&LabeledRow>, Vec<&LabeledRow>) = rows
        .into_iter()
        .partition(|r| split.test.passes(r.features[split.feature]));
    Node::Split {
        feature: split.feature,
        test: split.test,
        yes: Box::new(grow(yes, kinds, n_classes, params, depth + 1)),
        no: Box::new(grow(no, kinds, n_classes, params, depth + 1)),
    }
}

/// Greedy top-down CART induction with Gini impurity and no pruning.
pub fn learn_tree(rows: &[LabeledRow], kinds: &[FeatureKind], params: &TreeParams) -> Result<DecisionTree> {
    if rows.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.features.len() != kinds.len()) {
        return Err(Error::InvalidSpec(format!(
            "row has {} features, expected {}",
            r.features.len(),
            kinds.len()
        )));
    }
    let n_classes = rows.iter().map(|r| r.target).max().unwrap_or(0) + 1;
    let refs: Vec<&LabeledRow> = rows.iter().collect();
    Ok(DecisionTree {
        root: grow(refs, kinds, n_classes, params, 0),
        kinds: kinds.to_vec(),
        n_classes,
    })
}

pub fn predict(tree: &DecisionTree, features: &[f64]) -> usize {
    tree.predict(features)
}

/// Fraction of rows the tree classifies correctly.
pub fn accuracy(tree: &DecisionTree, rows: &[LabeledRow]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    let hits = rows.iter().filter(|r| tree.predict(&r.features) == r.target).count();
    hits as f64 / rows.len() as f64
}

/// Mean held-out accuracy over `folds` contiguous folds of a seeded shuffle.
pub fn cross_validate(
    rows: &[LabeledRow],
    kinds: &[FeatureKind],
    folds: usize,
    seed: u64,
    params: &TreeParams,
) -> Result<f64> {
    let n = rows.len();
    if folds < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidSpec(format!("{folds} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut total = 0.0;
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let test: Vec<LabeledRow> = order[lo..hi].iter().map(|&i| rows[i].clone()).collect();
        let train: Vec<LabeledRow> = order[..lo]
            .iter()
            .chain(&order[hi..])
            .map(|&i| rows[i].clone())
            .collect();
        let tree = learn_tree(&train, kinds, params)?;
        total += accuracy(&tree, &test);
    }
    Ok(total / folds as f64)
}

/// Weighted Gini impurity of a split, for cross-checking the exact search.
pub fn weighted_gini(rows: &[LabeledRow], feature: usize, test: Test) -> f64 {
    let n_classes = rows.iter().map(|r| r.target).max().unwrap_or(0) + 1;
    let (l, r): (Vec<&LabeledRow>, Vec<&LabeledRow>) =
        rows.iter().partition(|r| test.passes(r.features[feature]));
    let gini = |part: &[&LabeledRow]| -> f64 {
        if part.is_empty() {
            return 0.0;
        }
        let m = part.len() as f64;
        1.0 - histogram(part, n_classes)
            .iter()
            .map(|&c| (c as f64 / m).powi(2))
            .sum::<f64>()
    };
    let n = rows.len() as f64;
    (l.len() as f64 * gini(&l) + r.len() as f64 * gini(&r)) / n
}

/// The root split chosen by the learner, if any.
pub fn root_split(tree: &DecisionTree) -> Option<(usize, Test)> {
    match &tree.root {
        Node::Split { feature, test, .. } => Some((*feature, *test)),
        Node::Leaf { .. } => None,
    }
}

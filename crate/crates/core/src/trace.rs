//! Execution traces, trace files, and per-secret functional rearrangement.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fda::{BasisSpec, FunctionalCurve, LeastSquaresFit};

/// One program run: `(x, y, z, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub secret: Vec<f64>,
    pub public: f64,
    pub aux: Vec<f64>,
    pub time: f64,
}

/// A validated collection of traces with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    secret_names: Vec<String>,
    public_name: String,
    aux_names: Vec<String>,
    time_name: String,
    records: Vec<ExecutionTrace>,
}

/// On-disk trace formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    /// Comma-separated with a `role:name` header.
    Delimited,
    /// JSON array of `{secret, public, aux, time}` objects.
    Structured,
}

impl TraceFormat {
    /// `.json` files are structured, everything else delimited.
    pub fn from_path(path: &Path) -> TraceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TraceFormat::Structured,
            _ => TraceFormat::Delimited,
        }
    }
}

/// Secret vectors ordered lexicographically; `-0.0` is folded into `0.0` so
/// grouping agrees with `==`.
#[derive(Debug, Clone)]
struct SecretKey(Vec<f64>);

impl SecretKey {
    fn new(v: &[f64]) -> Self {
        SecretKey(v.iter().map(|&x| if x == 0.0 { 0.0 } else { x }).collect())
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SecretKey {}

impl PartialOrd for SecretKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SecretKey {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

fn public_key(y: f64) -> u64 {
    if y == 0.0 { 0.0f64 } else { y }.to_bits()
}

fn fmt_secret(s: &[f64]) -> String {
    let parts: Vec<String> = s.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Per-secret view: publics in ascending order with their samples.
struct SecretGroup<'a> {
    secret: Vec<f64>,
    /// `(public, times, aux)` with `times` sorted ascending.
    points: Vec<(f64, Vec<f64>, &'a [f64])>,
}

impl TraceSet {
    pub fn new(
        secret_names: Vec<String>,
        public_name: impl Into<String>,
        aux_names: Vec<String>,
        records: Vec<ExecutionTrace>,
    ) -> Result<Self> {
        Self::with_time_name(secret_names, public_name, aux_names, "t", records)
    }

    pub fn with_time_name(
        secret_names: Vec<String>,
        public_name: impl Into<String>,
        aux_names: Vec<String>,
        time_name: impl Into<String>,
        records: Vec<ExecutionTrace>,
    ) -> Result<Self> {
        if secret_names.is_empty() {
            return Err(Error::Validation("at least one secret column is required".into()));
        }
        if records.is_empty() {
            return Err(Error::Empty("trace set has no records".into()));
        }
        let n = secret_names.len();
        let r = aux_names.len();
        let mut aux_seen: BTreeMap<(SecretKey, u64), usize> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            if rec.secret.len() != n || rec.aux.len() != r {
                return Err(Error::Validation(format!(
                    "record {i}: expected {n} secret and {r} aux values, found {} and {}",
                    rec.secret.len(),
                    rec.aux.len()
                )));
            }
            if rec.secret.iter().chain(&rec.aux).any(|v| !v.is_finite()) || !rec.public.is_finite() {
                return Err(Error::Validation(format!("record {i}: non-finite value")));
            }
            if !(rec.time.is_finite() && rec.time >= 0.0) {
                return Err(Error::Validation(format!(
                    "record {i}: time {} must be finite and non-negative",
                    rec.time
                )));
            }
            let key = (SecretKey::new(&rec.secret), public_key(rec.public));
            match aux_seen.get(&key) {
                Some(&j) if records[j].aux != rec.aux => {
                    return Err(Error::Validation(format!(
                        "auxiliary values differ for secret {} and public {} (records {j} and {i})",
                        fmt_secret(&rec.secret),
                        rec.public
                    )));
                }
                Some(_) => {}
                None => {
                    aux_seen.insert(key, i);
                }
            }
        }
        Ok(TraceSet {
            secret_names,
            public_name: public_name.into(),
            aux_names,
            time_name: time_name.into(),
            records,
        })
    }

    pub fn secret_dim(&self) -> usize {
        self.secret_names.len()
    }

    pub fn public_dim(&self) -> usize {
        1
    }

    pub fn secret_names(&self) -> &[String] {
        &self.secret_names
    }

    pub fn public_name(&self) -> &str {
        &self.public_name
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }

    pub fn time_name(&self) -> &str {
        &self.time_name
    }

    pub fn records(&self) -> &[ExecutionTrace] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same columns, new records (revalidated).
    pub fn with_records(&self, records: Vec<ExecutionTrace>) -> Result<TraceSet> {
        TraceSet::with_time_name(
            self.secret_names.clone(),
            self.public_name.clone(),
            self.aux_names.clone(),
            self.time_name.clone(),
            records,
        )
    }

    /// Distinct secrets in ascending lexicographic order.
    pub fn distinct_secrets(&self) -> Vec<Vec<f64>> {
        let mut keys: Vec<SecretKey> = self.records.iter().map(|r| SecretKey::new(&r.secret)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().map(|k| k.0).collect()
    }

    /// `[min y, max y]` over all records.
    pub fn public_domain(&self) -> (f64, f64) {
        self.records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.public), hi.max(r.public))
        })
    }

    fn groups(&self) -> Vec<SecretGroup<'_>> {
        let mut by_secret: BTreeMap<SecretKey, BTreeMap<u64, (f64, Vec<f64>, &[f64])>> = BTreeMap::new();
        for rec in &self.records {
            let y = if rec.public == 0.0 { 0.0 } else { rec.public };
            by_secret
                .entry(SecretKey::new(&rec.secret))
                .or_default()
                .entry(y.to_bits())
                .or_insert_with(|| (y, Vec::new(), &rec.aux))
                .1
                .push(rec.time);
        }
        by_secret
            .into_iter()
            .map(|(key, per_public)| {
                let mut points: Vec<_> = per_public.into_values().collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                for p in &mut points {
                    p.1.sort_by(f64::total_cmp);
                }
                SecretGroup {
                    secret: key.0,
                    points,
                }
            })
            .collect()
    }

    /// Fewest distinct public values observed for any one secret.
    pub fn min_distinct_publics(&self) -> usize {
        self.groups().iter().map(|g| g.points.len()).min().unwrap_or(0)
    }

    /// For every distinct public value (ascending), the per-secret mean times
    /// in ascending secret order. Secrets never run on that public are absent.
    pub fn means_by_public(&self) -> Vec<(f64, Vec<(Vec<f64>, f64)>)> {
        let mut out: BTreeMap<u64, (f64, Vec<(Vec<f64>, f64)>)> = BTreeMap::new();
        for g in self.groups() {
            for (y, times, _) in &g.points {
                out.entry(public_key(*y))
                    .or_insert_with(|| (*y, Vec::new()))
                    .1
                    .push((g.secret.clone(), mean(times)));
            }
        }
        let mut v: Vec<_> = out.into_values().collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

fn mean(sorted: &[f64]) -> f64 {
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// The functional summary of all traces sharing one secret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperTrace {
    pub secret: Vec<f64>,
    pub aux_curves: Vec<FunctionalCurve>,
    pub timing_curve: FunctionalCurve,
    pub sample_count: usize,
}

impl HyperTrace {
    pub fn domain(&self) -> (f64, f64) {
        self.timing_curve.domain()
    }
}

/// Default cubic basis over the traces' public domain, sized from the
/// smallest per-secret count of distinct publics. `n_basis` overrides the size.
pub fn default_basis(traces: &TraceSet, n_basis: Option<usize>) -> Result<BasisSpec> {
    let domain = traces.public_domain();
    if domain.0 >= domain.1 {
        return Err(Error::UnderDetermined {
            points: 1,
            n_basis: crate::fda::DEFAULT_ORDER,
            context: Some("the whole trace set (a single public value)".into()),
        });
    }
    match n_basis {
        Some(n) => BasisSpec::uniform(domain, n, crate::fda::DEFAULT_ORDER),
        None => BasisSpec::default_for(domain, traces.min_distinct_publics()),
    }
}

/// One hyper-trace per distinct secret, in ascending secret order. Repeated
/// samples at one `(secret, public)` are averaged before fitting.
pub fn build_hypertraces(traces: &TraceSet, basis: &BasisSpec) -> Result<Vec<HyperTrace>> {
    let groups = traces.groups();
    for g in &groups {
        if g.points.len() < basis.n_basis() {
            return Err(Error::UnderDetermined {
                points: g.points.len(),
                n_basis: basis.n_basis(),
                context: Some(format!("secret {}", fmt_secret(&g.secret))),
            });
        }
    }
    // Secrets usually share their public inputs, so projectors are cached
    // per distinct abscissa set.
    let mut fits: HashMap<Vec<u64>, LeastSquaresFit> = HashMap::new();
    for g in &groups {
        let key: Vec<u64> = g.points.iter().map(|p| p.0.to_bits()).collect();
        if !fits.contains_key(&key) {
            let ys: Vec<f64> = g.points.iter().map(|p| p.0).collect();
            fits.insert(key, LeastSquaresFit::new(&ys, basis)?);
        }
    }
    let r = traces.aux_names().len();
    groups
        .par_iter()
        .map(|g| {
            let key: Vec<u64> = g.points.iter().map(|p| p.0.to_bits()).collect();
            let fit = &fits[&key];
            let means: Vec<f64> = g.points.iter().map(|p| mean(&p.1)).collect();
            let timing_curve = fit.fit(&means)?;
            let aux_curves = (0..r)
                .map(|a| {
                    let values: Vec<f64> = g.points.iter().map(|p| p.2[a]).collect();
                    fit.fit(&values)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(HyperTrace {
                secret: g.secret.clone(),
                aux_curves,
                timing_curve,
                sample_count: g.points.iter().map(|p| p.1.len()).sum(),
            })
        })
        .collect()
}

// ---- file formats ----

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Secret,
    Public,
    Aux,
    Time,
}

fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<Vec<(Role, String)>> {
    let mut cols = Vec::with_capacity(header.len());
    for field in header.iter() {
        let (role, name) = field.trim().split_once(':').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("column '{field}' lacks a role prefix"),
        })?;
        let role = match role.trim() {
            "secret" => Role::Secret,
            "public" => Role::Public,
            "aux" => Role::Aux,
            "time" => Role::Time,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("unknown column role '{other}'"),
                })
            }
        };
        cols.push((role, name.trim().to_string()));
    }
    let count = |r: Role| cols.iter().filter(|c| c.0 == r).count();
    if count(Role::Public) != 1 {
        return Err(Error::UnsupportedDimension(count(Role::Public)));
    }
    if count(Role::Time) != 1 || count(Role::Secret) == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header needs one time column and at least one secret column".into(),
        });
    }
    Ok(cols)
}

fn read_delimited(path: &Path, text: &str) -> Result<TraceSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| csv_error(path, e))?,
        None => return Err(Error::Empty(format!("{} has no header", path.display()))),
    };
    let cols = parse_header(path, &header)?;
    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != cols.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", cols.len(), row.len()),
            });
        }
        let mut rec = ExecutionTrace {
            secret: Vec::new(),
            public: 0.0,
            aux: Vec::new(),
            time: 0.0,
        };
        for ((role, name), field) in cols.iter().zip(row.iter()) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column '{name}': '{field}' is not a number"),
            })?;
            match role {
                Role::Secret => rec.secret.push(v),
                Role::Public => rec.public = v,
                Role::Aux => rec.aux.push(v),
                Role::Time => rec.time = v,
            }
        }
        records.push(rec);
    }
    let names = |r: Role| cols.iter().filter(|c| c.0 == r).map(|c| c.1.clone()).collect::<Vec<_>>();
    TraceSet::with_time_name(
        names(Role::Secret),
        names(Role::Public).remove(0),
        names(Role::Aux),
        names(Role::Time).remove(0),
        records,
    )
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    secret: Vec<f64>,
    public: f64,
    #[serde(default)]
    aux: BTreeMap<String, f64>,
    time: f64,
}

fn read_structured(path: &Path, text: &str) -> Result<TraceSet> {
    let raw: Vec<RecordJson> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let first = raw
        .first()
        .ok_or_else(|| Error::Empty(format!("{} holds no records", path.display())))?;
    let aux_names: Vec<String> = first.aux.keys().cloned().collect();
    let n = first.secret.len();
    let mut records = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        if !r.aux.keys().eq(aux_names.iter()) {
            return Err(Error::Validation(format!("record {i}: auxiliary keys differ from record 0")));
        }
        records.push(ExecutionTrace {
            secret: r.secret,
            public: r.public,
            aux: r.aux.into_values().collect(),
            time: r.time,
        });
    }
    TraceSet::new(default_secret_names(n), "y", aux_names, records)
}

fn default_secret_names(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["s".to_string()]
    } else {
        (1..=n).map(|i| format!("s{i}")).collect()
    }
}

/// Reads a trace file.
pub fn load_traces(path: impl AsRef<Path>, format: TraceFormat) -> Result<TraceSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    match format {
        TraceFormat::Delimited => read_delimited(path, &text),
        TraceFormat::Structured => read_structured(path, &text),
    }
}

/// Writes traces in canonical column order (secrets, public, aux, time).
/// Numbers use the shortest representation that parses back exactly.
pub fn save_traces(traces: &TraceSet, path: impl AsRef<Path>, format: TraceFormat) -> Result<()> {
    let text = match format {
        TraceFormat::Delimited => to_delimited(traces),
        TraceFormat::Structured => {
            let raw: Vec<RecordJson> = traces
                .records
                .iter()
                .map(|r| RecordJson {
                    secret: r.secret.clone(),
                    public: r.public,
                    aux: traces.aux_names.iter().cloned().zip(r.aux.iter().copied()).collect(),
                    time: r.time,
                })
                .collect();
            serde_json::to_string_pretty(&raw)? + "\n"
        }
    };
    fs::write(path, text)?;
    Ok(())
}

/// Delimited-text rendering of `traces`.
pub fn to_delimited(traces: &TraceSet) -> String {
    let mut header: Vec<String> = traces.secret_names.iter().map(|n| format!("secret:{n}")).collect();
    header.push(format!("public:{}", traces.public_name));
    header.extend(traces.aux_names.iter().map(|n| format!("aux:{n}")));
    header.push(format!("time:{}", traces.time_name));
    let mut out = header.join(",");
    out.push('\n');
    for r in &traces.records {
        let fields: Vec<String> = r
            .secret
            .iter()
            .chain(std::iter::once(&r.public))
            .chain(&r.aux)
            .chain(std::iter::once(&r.time))
            .map(|v| v.to_string())
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Path-based convenience: format from the file extension.
pub fn load_traces_auto(path: impl AsRef<Path>) -> Result<TraceSet> {
    let path: PathBuf = path.as_ref().to_path_buf();
    load_traces(&path, TraceFormat::from_path(&path))
}

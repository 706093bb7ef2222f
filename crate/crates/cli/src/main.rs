use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use funchan::attacker::{match_nearest_member, match_remote, MatchReport, RemoteObservation};
use funchan::benchgen::{branch_loop_secrets, generate, BenchKind, BenchModel};
use funchan::cluster::Algorithm;
use funchan::discriminant::TreeParams;
use funchan::fda::{DistanceSpec, Norm, DEFAULT_GRID_N};
use funchan::mitigation::{mitigate_traces, MitigationScheme};
use funchan::pipeline::{run_pipeline, write_bundle, ClusterFile, PipelineConfig, StageError, TraceSource};
use funchan::trace::{build_hypertraces, default_basis, load_traces_auto, save_traces, to_delimited, TraceFormat, TraceSet};
use funchan::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "funchan", version, about = "Discover and explain timing side channels from functional timing data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark program and write its traces.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        /// Output file (.json for structured, anything else for CSV); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster timing functions, explain the clusters and write a report bundle.
    Analyze(AnalyzeArgs),
    /// Apply a delay-only mitigation to a trace file.
    Mitigate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match a remote timing observation against clusters from `analyze`.
    Match {
        /// Two-column CSV (public, time) or JSON observation.
        #[arg(long)]
        observation: PathBuf,
        /// `centroids.json` from an analyze run, or the run's output directory.
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, default_value_t = 1)]
        deriv_order: usize,
        #[arg(long, default_value = "2")]
        norm: String,
        #[arg(long, default_value_t = DEFAULT_GRID_N)]
        grid: usize,
        /// Compare against every member curve of this trace file instead of centroids.
        #[arg(long)]
        members: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Summarize a report bundle written by `analyze`.
    Report {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Benchmark kind, e.g. zigzag, process-bid, branch-loop, strcmp-jetty.
    #[arg(long, conflicts_with = "model_file")]
    model: Option<String>,
    /// TOML model description (kind, parameters, noise_sigma, seed, secrets, publics).
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Noise standard deviation in seconds.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    model_seed: Option<u64>,
    /// Branch-loop variants (constant-factor versions per arm).
    #[arg(long)]
    variants: Option<usize>,
    /// Branch-loop secrets per arm-variant.
    #[arg(long)]
    per_variant: Option<usize>,
}

#[derive(Args)]
struct SchemeArgs {
    /// Quantize release times to multiples of this slot width.
    #[arg(long, conflicts_with = "double_scheme")]
    quantize: Option<f64>,
    /// Epoch-doubling schedule with this start time.
    #[arg(long, num_args = 0..=1, default_missing_value = "4")]
    double_scheme: Option<f64>,
}

impl SchemeArgs {
    fn scheme(&self) -> Option<MitigationScheme> {
        match (self.quantize, self.double_scheme) {
            (Some(q), _) => Some(MitigationScheme::Quantize { q }),
            (None, Some(t0)) => Some(MitigationScheme::DoubleScheme { t0 }),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace file (CSV or JSON).
    #[arg(long, conflicts_with_all = ["model", "model_file"])]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    eps: f64,
    /// Tolerance for auxiliary curves (defaults to --eps).
    #[arg(long)]
    eps_aux: Option<f64>,
    #[arg(long, default_value_t = 1)]
    deriv_order: usize,
    #[arg(long, default_value = "2")]
    norm: String,
    /// Quadrature intervals.
    #[arg(long, default_value_t = DEFAULT_GRID_N)]
    grid: usize,
    /// Cluster bound (defaults to the number of secrets).
    #[arg(long)]
    max_clusters: Option<usize>,
    /// hierarchical or kmeans.
    #[arg(long, default_value = "hierarchical")]
    algo: String,
    #[arg(long, default_value_t = 20)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spline basis size (defaults to half the public values, at most 20).
    #[arg(long)]
    n_basis: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "funchan-out")]
    out: PathBuf,
}

/// Model file layout: a model plus optional explicit inputs.
#[derive(Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    model: BenchModel,
    secrets: Option<Vec<Vec<f64>>>,
    publics: Option<Vec<f64>>,
    per_variant: Option<usize>,
}

/// Errors in what the user supplied; reported with exit status 3.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn parse_norm(s: &str) -> anyhow::Result<Norm> {
    s.parse::<Norm>().map_err(anyhow::Error::from)
}

fn build_model(args: &ModelArgs) -> anyhow::Result<Option<(BenchModel, Option<Vec<Vec<f64>>>, Option<Vec<f64>>)>> {
    let (mut model, mut secrets, publics, mut per_variant) = if let Some(path) = &args.model_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let f: ModelFile =
            toml::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        (f.model, f.secrets, f.publics, f.per_variant)
    } else if let Some(kind) = &args.model {
        let kind: BenchKind = toml::from_str(&format!("kind = {kind:?}"))
            .map_err(|_| input_err(format!("unknown model kind '{kind}'")))?;
        (BenchModel::new(kind), None, None, None)
    } else {
        return Ok(None);
    };
    if let Some(n) = args.noise {
        model.noise_sigma = n;
    }
    if let Some(s) = args.model_seed {
        model.seed = s;
    }
    if let Some(v) = args.variants {
        match &mut model.kind {
            BenchKind::BranchLoop { variants } => *variants = v,
            _ => return Err(input_err("--variants only applies to branch-loop")),
        }
    }
    per_variant = args.per_variant.or(per_variant);
    if let Some(per) = per_variant {
        let BenchKind::BranchLoop { variants } = model.kind else {
            return Err(input_err("per_variant only applies to branch-loop"));
        };
        if secrets.is_some() {
            return Err(input_err("give either secrets or per_variant, not both"));
        }
        secrets = Some(branch_loop_secrets(variants, per));
    }
    Ok(Some((model, secrets, publics)))
}

fn generate_traces(args: &ModelArgs) -> anyhow::Result<Option<TraceSet>> {
    let Some((model, secrets, publics)) = build_model(args)? else {
        return Ok(None);
    };
    let secrets = secrets.unwrap_or_else(|| model.default_secrets());
    let publics = publics.unwrap_or_else(|| model.default_publics());
    Ok(Some(generate(&model, &secrets, &publics)?))
}

fn cmd_generate(model: &ModelArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let traces = generate_traces(model)?.ok_or_else(|| input_err("give --model or --model-file"))?;
    match out {
        Some(path) => {
            save_traces(&traces, path, TraceFormat::from_path(path))?;
            eprintln!("wrote {} traces to {}", traces.len(), path.display());
        }
        None => print!("{}", to_delimited(&traces)),
    }
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let source = match (&a.input, generate_traces(&a.model)?) {
        (Some(path), _) => TraceSource::File(path.clone()),
        (None, Some(traces)) => TraceSource::Traces(Box::new(traces)),
        (None, None) => return Err(input_err("give --input, --model or --model-file")),
    };
    let spec = DistanceSpec::new(a.deriv_order, parse_norm(&a.norm)?).with_grid(a.grid);
    let mut algorithm: Algorithm = a.algo.parse()?;
    if let Algorithm::ConstrainedKmeans { seed } = &mut algorithm {
        *seed = a.seed;
    }
    let mut config = PipelineConfig::new(source, a.eps, spec);
    config.eps_aux = a.eps_aux;
    config.max_clusters = a.max_clusters;
    config.algorithm = algorithm;
    config.folds = a.folds;
    config.mitigation = a.scheme.scheme();
    config.seed = a.seed;
    config.n_basis = a.n_basis;
    config.tree = TreeParams {
        max_depth: a.max_depth,
        ..TreeParams::default()
    };
    let outcome = run_pipeline(&config)?;
    write_bundle(&outcome, &a.out)?;
    print_summary(&outcome.report(), outcome.discriminant.as_ref().map(|d| d.tree_text()).as_deref());
    println!("bundle: {}", a.out.display());
    Ok(())
}

fn print_summary(report: &serde_json::Value, tree: Option<&str>) {
    let get = |k: &str| match &report[k] {
        serde_json::Value::Null => "n/a".to_string(),
        v => v.to_string(),
    };
    println!("classes (k): {}", get("k"));
    println!("pointwise classes: {}", get("nonfunctional_k"));
    println!("cluster sizes: {}", get("cluster_sizes"));
    println!("leakage: {} bits, bound {}", get("leakage_bits"), get("kd_bound"));
    if let Some(note) = report["note"].as_str() {
        println!("note: {note}");
    }
    println!(
        "tree: height {}, leaves {}, cv accuracy {}",
        get("tree_height"),
        get("leaf_count"),
        get("accuracy")
    );
    if let Some(t) = tree {
        print!("{t}");
    }
}

fn cmd_mitigate(input: &Path, scheme: &SchemeArgs, out: &Path) -> anyhow::Result<()> {
    let scheme = scheme
        .scheme()
        .ok_or_else(|| input_err("give --quantize Q or --double-scheme [T0]"))?;
    let traces = load_traces_auto(input)?;
    let mitigated = mitigate_traces(&traces, &scheme)?;
    save_traces(&mitigated, out, TraceFormat::from_path(out))?;
    eprintln!("wrote {} mitigated traces to {}", mitigated.len(), out.display());
    Ok(())
}

fn load_observation(path: &Path) -> anyhow::Result<RemoteObservation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        let parse = |j: usize| rec.get(j).and_then(|v| v.parse::<f64>().ok());
        match (rec.len(), parse(0), parse(1)) {
            (2, Some(y), Some(t)) => samples.push((y, t)),
            // A header row.
            (2, None, None) if samples.is_empty() => {}
            _ => return Err(input_err(format!("{}:{line}: expected 'public,time'", path.display()))),
        }
    }
    if samples.is_empty() {
        return Err(input_err(format!("{}: no samples", path.display())));
    }
    Ok(RemoteObservation::new(samples))
}

fn load_clusters(path: &Path) -> anyhow::Result<ClusterFile> {
    let file = if path.is_dir() { path.join("centroids.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", file.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_match(
    observation: &Path,
    clusters: &Path,
    deriv_order: usize,
    norm: &str,
    grid: usize,
    members: Option<&Path>,
    json: bool,
) -> anyhow::Result<()> {
    let spec = DistanceSpec::new(deriv_order, parse_norm(norm)?).with_grid(grid);
    let obs = load_observation(observation)?;
    let file = load_clusters(clusters)?;
    let report: MatchReport = match members {
        None => match_remote(&obs, &file.clusters, &spec)?,
        Some(path) => {
            let traces = load_traces_auto(path)?;
            let basis = default_basis(&traces, None)?;
            let hts = build_hypertraces(&traces, &basis)?;
            if hts.iter().map(|h| &h.secret).ne(file.secrets.iter()) {
                bail!(input_err("member traces do not match the clustered secrets"));
            }
            let curves: Vec<_> = hts.into_iter().map(|h| h.timing_curve).collect();
            match_nearest_member(&obs, &curves, &file.clusters, &spec)?
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("cluster: {}", report.cluster_id);
        println!("ambiguous: {}", report.ambiguous);
        println!("leakage: {:.6} bits, bound {:.6}", report.leakage_bits, report.kd_bound);
        let d: Vec<String> = report.distances.iter().map(|d| format!("{d:.9}")).collect();
        println!("distances: {}", d.join(" "));
    }
    Ok(())
}

fn cmd_report(dir: &Path, json: bool) -> anyhow::Result<()> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    if json {
        print!("{text}");
        return Ok(());
    }
    let report: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let tree = fs::read_to_string(dir.join("tree.txt")).ok();
    print_summary(&report, tree.as_deref());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { model, out } => cmd_generate(&model, out.as_deref()),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Mitigate { input, scheme, out } => cmd_mitigate(&input, &scheme, &out),
        Command::Match {
            observation,
            clusters,
            deriv_order,
            norm,
            grid,
            members,
            json,
        } => cmd_match(&observation, &clusters, deriv_order, &norm, grid, members.as_deref(), json),
        Command::Report { dir, json } => cmd_report(&dir, json),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err
        .downcast_ref::<StageError>()
        .map(|s| &s.source)
        .or_else(|| err.downcast_ref::<Error>());
    if let Some(e) = core {
        return if matches!(e, Error::Infeasible { .. }) {
            EXIT_INFEASIBLE
        } else if e.is_input_error() {
            EXIT_INPUT
        } else {
            EXIT_OTHER
        };
    }
    if err.downcast_ref::<InputError>().is_some() || err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_INPUT;
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Seeded synthetic trace generators.
//!
//! Base times are in seconds. Noise is Gaussian and drawn from a ChaCha
//! stream selected by the secret's position in the input list, so adding or
//! reordering publics never perturbs another secret's samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{ExecutionTrace, TraceSet};

pub const DEFAULT_NOISE: f64 = 1e-4;
/// Branch-and-loop arm boundaries on the secret.
pub const BRANCH_THRESHOLDS: [f64; 4] = [100.0, 195.0, 290.0, 400.0];
/// Per-filter cost (seconds per size unit) of the filter-snapbuddy model.
pub const FILTER_COSTS: [f64; 5] = [0.02, 0.05, 0.08, 0.12, 0.2];
pub const FILTER_NAMES: [&str; 5] = ["blurFilter", "grayFilter", "sepiaFilter", "edgeFilter", "oilFilter"];

fn d_fast() -> f64 {
    0.001
}
fn d_record() -> f64 {
    0.002
}
fn d_one() -> usize {
    1
}
fn d_jetty_a() -> f64 {
    0.02
}
fn d_jetty_b() -> f64 {
    0.005
}
fn d_gab_a() -> f64 {
    0.5
}
fn d_gab_b() -> f64 {
    0.02
}
fn d_snap_a() -> f64 {
    0.5
}
fn d_noise() -> f64 {
    DEFAULT_NOISE
}

/// Which program is simulated, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BenchKind {
    /// `s` even: 3 ms for even `y`, 1 ms for odd `y`; `s` odd: 2 ms.
    Zigzag,
    /// `y < s`: `t_fast`; otherwise `t_fast + t_record`.
    ProcessBid {
        #[serde(default = "d_fast")]
        t_fast: f64,
        #[serde(default = "d_record")]
        t_record: f64,
    },
    /// Comparison oracle: 1 ms if `y < s`, 5 ms if `y == s`, 3 ms otherwise.
    GuessSecret1,
    /// Secret `[s, t]`, `t` in {1, 2, 3}: sleeps of 1/10/1000 ms when
    /// `y <= s`, else 1/100/1000 ms.
    GuessSecret2,
    /// Four loop arms (log N, N, N log N, N^2) selected by the secret, each
    /// split into `variants` constant-factor versions; 1 ms per iteration.
    BranchLoop {
        #[serde(default = "d_one")]
        variants: usize,
    },
    /// Secret `[len, variant]`: `a + 0.002 * variant + b * min(len, y)`.
    StrcmpJetty {
        #[serde(default = "d_jetty_a")]
        a: f64,
        #[serde(default = "d_jetty_b")]
        b: f64,
    },
    /// Secret key `s`: `a + b * popcount(s) * y`.
    ModpowGabfeed {
        #[serde(default = "d_gab_a")]
        a: f64,
        #[serde(default = "d_gab_b")]
        b: f64,
    },
    /// Secret user id; filter set = bits of `id mod 32`:
    /// `a + y * sum(filter costs)`.
    FilterSnapbuddy {
        #[serde(default = "d_snap_a")]
        a: f64,
    },
}

/// A generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchModel {
    #[serde(flatten)]
    pub kind: BenchKind,
    #[serde(default = "d_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Timing samples per (secret, public).
    #[serde(default = "d_one")]
    pub repeats: usize,
}

impl BenchModel {
    pub fn new(kind: BenchKind) -> Self {
        BenchModel {
            kind,
            noise_sigma: DEFAULT_NOISE,
            seed: 0,
            repeats: 1,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            BenchKind::Zigzag => "zigzag".into(),
            BenchKind::ProcessBid { .. } => "process-bid".into(),
            BenchKind::GuessSecret1 => "guess-secret-1".into(),
            BenchKind::GuessSecret2 => "guess-secret-2".into(),
            BenchKind::BranchLoop { variants } => format!("branch-loop({variants})"),
            BenchKind::StrcmpJetty { .. } => "strcmp-jetty".into(),
            BenchKind::ModpowGabfeed { .. } => "modpow-gabfeed".into(),
            BenchKind::FilterSnapbuddy { .. } => "filter-snapbuddy".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Generation(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        if self.repeats == 0 {
            return Err(Error::Generation("repeats must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Generation(format!("{name} = {v} must be finite and >= 0")))
            }
        };
        match self.kind {
            BenchKind::ProcessBid { t_fast, t_record } => {
                positive("t_fast", t_fast)?;
                positive("t_record", t_record)
            }
            BenchKind::BranchLoop { variants } if variants == 0 => {
                Err(Error::Generation("branch-loop needs at least one variant".into()))
            }
            BenchKind::StrcmpJetty { a, b } | BenchKind::ModpowGabfeed { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            BenchKind::FilterSnapbuddy { a } => positive("a", a),
            _ => Ok(()),
        }
    }

    pub fn secret_names(&self) -> Vec<String> {
        let v: &[&str] = match self.kind {
            BenchKind::GuessSecret2 => &["s", "t"],
            BenchKind::StrcmpJetty { .. } => &["len", "variant"],
            BenchKind::ModpowGabfeed { .. } => &["key"],
            BenchKind::FilterSnapbuddy { .. } => &["user"],
            _ => &["s"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn aux_names(&self) -> Vec<String> {
        match self.kind {
            BenchKind::Zigzag => ["secret_even_branch", "sleep3_calls", "sleep1_calls", "sleep2_calls"]
                .map(String::from)
                .to_vec(),
            BenchKind::ProcessBid { .. } => vec!["recordBid_calls".into(), "proBid_entry".into()],
            BenchKind::GuessSecret1 => vec!["less_branch".into(), "equal_branch".into()],
            BenchKind::GuessSecret2 => vec!["low_le_secret".into(), "t_arm".into()],
            BenchKind::BranchLoop { variants } => ["log", "linear", "nlog", "quadratic"]
                .iter()
                .flat_map(|arm| (1..=variants).map(move |j| format!("loop_{arm}_{j}")))
                .collect(),
            BenchKind::StrcmpJetty { .. } => vec!["doHandle_entry".into(), "stringEquals_bblock_118".into()],
            BenchKind::ModpowGabfeed { .. } => vec!["standardMultiply_bblock_18".into()],
            BenchKind::FilterSnapbuddy { .. } => FILTER_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Secrets used by the reference experiments.
    pub fn default_secrets(&self) -> Vec<Vec<f64>> {
        match self.kind {
            BenchKind::Zigzag | BenchKind::ProcessBid { .. } => (1..=100).map(|s| vec![s as f64]).collect(),
            BenchKind::GuessSecret1 => (1..=100).map(|s| vec![s as f64]).collect(),
            BenchKind::GuessSecret2 => (0..100)
                .map(|i| vec![(4 * (i / 3) + 1) as f64, (i % 3 + 1) as f64])
                .collect(),
            BenchKind::BranchLoop { variants } => branch_loop_secrets(variants, 9),
            BenchKind::StrcmpJetty { .. } => (1..=20)
                .flat_map(|len| (0..5).map(move |v| vec![len as f64, v as f64]))
                .collect(),
            BenchKind::ModpowGabfeed { .. } => (1..=34u32)
                .flat_map(|pc| {
                    let k = (1u64 << pc) - 1;
                    [k, k << 3]
                })
                .map(|k| vec![k as f64])
                .collect(),
            BenchKind::FilterSnapbuddy { .. } => (0..96).map(|u| vec![u as f64]).collect(),
        }
    }

    /// Public inputs used by the reference experiments.
    pub fn default_publics(&self) -> Vec<f64> {
        match self.kind {
            BenchKind::Zigzag => (1..=20).map(f64::from).collect(),
            BenchKind::ProcessBid { .. } | BenchKind::GuessSecret1 => (1..=100).map(f64::from).collect(),
            BenchKind::GuessSecret2 => (1..=400).map(|y| f64::from(y) / 4.0).collect(),
            BenchKind::BranchLoop { .. } => (0..21).map(|i| f64::from(10 + 20 * i)).collect(),
            BenchKind::StrcmpJetty { .. } => (1..=100).map(f64::from).collect(),
            BenchKind::ModpowGabfeed { .. } => (1..=20).map(f64::from).collect(),
            BenchKind::FilterSnapbuddy { .. } => (1..=14).map(f64::from).collect(),
        }
    }

    /// Noise-free `(time, aux)` for one input.
    pub fn base(&self, secret: &[f64], y: f64) -> Result<(f64, Vec<f64>)> {
        let need = self.secret_names().len();
        if secret.len() != need {
            return Err(Error::Generation(format!(
                "{} expects {need} secret components, got {}",
                self.name(),
                secret.len()
            )));
        }
        let s = secret[0];
        let b = |c: bool| if c { 1.0 } else { 0.0 };
        Ok(match self.kind {
            BenchKind::Zigzag => {
                let (se, ye) = (is_even(s)?, is_even(y)?);
                let t = match (se, ye) {
                    (true, true) => 0.003,
                    (true, false) => 0.001,
                    (false, _) => 0.002,
                };
                (t, vec![b(se), b(se && ye), b(se && !ye), b(!se)])
            }
            BenchKind::ProcessBid { t_fast, t_record } => {
                let record = y >= s;
                (t_fast + if record { t_record } else { 0.0 }, vec![b(record), 1.0])
            }
            BenchKind::GuessSecret1 => {
                let t = if y < s {
                    0.001
                } else if y == s {
                    0.005
                } else {
                    0.003
                };
                (t, vec![b(y < s), b(y == s)])
            }
            BenchKind::GuessSecret2 => {
                let arm = secret[1];
                if ![1.0, 2.0, 3.0].contains(&arm) {
                    return Err(Error::Generation(format!("t = {arm} not in {{1, 2, 3}}")));
                }
                let le = y <= s;
                let ms = match (le, arm as u8) {
                    (_, 1) => 1.0,
                    (true, 2) => 10.0,
                    (false, 2) => 100.0,
                    _ => 1000.0,
                };
                (ms / 1000.0, vec![b(le), arm])
            }
            BenchKind::BranchLoop { variants } => {
                if y < 1.0 {
                    return Err(Error::Generation(format!("loop bound N = {y} must be >= 1")));
                }
                let (arm, j) = branch_arm(s, variants)?;
                let iters = j as f64 * arm_cost(arm, y);
                let mut aux = vec![0.0; 4 * variants];
                aux[arm * variants + j - 1] = iters;
                (iters * 1e-3, aux)
            }
            BenchKind::StrcmpJetty { a, b: slope } => {
                let len = secret[0];
                if len < 1.0 || len.fract() != 0.0 {
                    return Err(Error::Generation(format!("length {len} must be a positive integer")));
                }
                let m = len.min(y);
                (a + 0.002 * secret[1] + slope * m, vec![1.0, m])
            }
            BenchKind::ModpowGabfeed { a, b: slope } => {
                let pc = popcount(s)? as f64;
                (a + slope * pc * y, vec![(pc - 1.0) * y])
            }
            BenchKind::FilterSnapbuddy { a } => {
                let mask = (s.rem_euclid(32.0)) as usize;
                if s < 0.0 || s.fract() != 0.0 {
                    return Err(Error::Generation(format!("user id {s} must be a non-negative integer")));
                }
                let used: Vec<f64> = (0..FILTER_COSTS.len()).map(|f| b(mask >> f & 1 == 1)).collect();
                let cost: f64 = used.iter().zip(FILTER_COSTS).map(|(u, c)| u * c).sum();
                (a + y * cost, used)
            }
        })
    }
}

fn is_even(v: f64) -> Result<bool> {
    if v.fract() != 0.0 {
        return Err(Error::Generation(format!("{v} is not an integer")));
    }
    Ok(v.rem_euclid(2.0) == 0.0)
}

fn popcount(v: f64) -> Result<u32> {
    if v < 0.0 || v.fract() != 0.0 || v >= 2f64.powi(53) {
        return Err(Error::Generation(format!("key {v} must be a non-negative integer below 2^53")));
    }
    Ok((v as u64).count_ones())
}

fn arm_cost(arm: usize, n: f64) -> f64 {
    match arm {
        0 => n.log2(),
        1 => n,
        2 => n * n.log2(),
        _ => n * n,
    }
}

/// Arm index and 1-based variant of a branch-loop secret.
fn branch_arm(s: f64, variants: usize) -> Result<(usize, usize)> {
    let mut lo = 0.0;
    for (arm, &hi) in BRANCH_THRESHOLDS.iter().enumerate() {
        if s < hi {
            if s < lo {
                return Err(Error::Generation(format!("secret {s} below 0")));
            }
            let frac = (s - lo) / (hi - lo);
            let j = ((frac * variants as f64).floor() as usize).min(variants - 1) + 1;
            return Ok((arm, j));
        }
        lo = hi;
    }
    Err(Error::Generation(format!("secret {s} outside [0, 400)")))
}

/// `per_variant` evenly spaced secrets inside every arm-variant sub-range.
pub fn branch_loop_secrets(variants: usize, per_variant: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(4 * variants * per_variant);
    let mut lo = 0.0;
    for &hi in &BRANCH_THRESHOLDS {
        let width = (hi - lo) / variants as f64;
        for j in 0..variants {
            for m in 0..per_variant {
                let s = lo + width * (j as f64 + (m as f64 + 0.5) / per_variant as f64);
                out.push(vec![s]);
            }
        }
        lo = hi;
    }
    out
}

/// Simulates `model` on every `(secret, public)` pair.
pub fn generate(model: &BenchModel, secrets: &[Vec<f64>], publics: &[f64]) -> Result<TraceSet> {
    model.validate()?;
    if secrets.is_empty() || publics.is_empty() {
        return Err(Error::Generation("secrets and publics must be non-empty".into()));
    }
    let normal = Normal::new(0.0, model.noise_sigma).map_err(|e| Error::Generation(e.to_string()))?;
    let mut records = Vec::with_capacity(secrets.len() * publics.len() * model.repeats);
    for (idx, secret) in secrets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(idx as u64);
        for &y in publics {
            let (t, aux) = model.base(secret, y)?;
            for _ in 0..model.repeats {
                let noise = if model.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                records.push(ExecutionTrace {
                    secret: secret.clone(),
                    public: y,
                    aux: aux.clone(),
                    time: (t + noise).max(0.0),
                });
            }
        }
    }
    TraceSet::new(model.secret_names(), "y", model.aux_names(), records)
}

/// [`generate`] over the model's default secrets and publics.
pub fn generate_default(model: &BenchModel) -> Result<TraceSet> {
    generate(model, &model.default_secrets(), &model.default_publics())
}

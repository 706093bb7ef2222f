//! Derivative p-norm distances between curves.
//!
//! `d_{i,p}(f, g) = (∫ |f^(i) - g^(i)|^p dy)^(1/p)`, integrated with composite
//! Simpson quadrature on a uniform grid; `p = ∞` takes the maximum over the
//! same grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::FunctionalCurve;
use crate::cluster::DistanceMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_N: usize = 512;
pub const MIN_GRID_N: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Inf,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "1",
            Norm::L2 => "2",
            Norm::Inf => "inf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "infinity" | "∞" | "max" | "sup" => Ok(Norm::Inf),
            other => Err(Error::InvalidSpec(format!("unknown norm '{other}'"))),
        }
    }
}

/// Which derivative to compare, under which norm, on how fine a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub deriv_order: usize,
    pub norm: Norm,
    pub grid_n: usize,
}

impl DistanceSpec {
    pub fn new(deriv_order: usize, norm: Norm) -> Self {
        DistanceSpec {
            deriv_order,
            norm,
            grid_n: DEFAULT_GRID_N,
        }
    }

    pub fn with_grid(mut self, grid_n: usize) -> Self {
        self.grid_n = grid_n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.deriv_order > 2 {
            return Err(Error::InvalidSpec(format!(
                "derivative order {} not in {{0, 1, 2}}",
                self.deriv_order
            )));
        }
        if self.grid_n < MIN_GRID_N {
            return Err(Error::InvalidSpec(format!(
                "grid resolution {} below {MIN_GRID_N}",
                self.grid_n
            )));
        }
        Ok(())
    }

    /// Number of Simpson intervals: `grid_n` rounded up to even.
    pub fn intervals(&self) -> usize {
        self.grid_n + self.grid_n % 2
    }
}

impl fmt::Display for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d_{{{},{}}}", self.deriv_order, self.norm)
    }
}

/// Uniform quadrature grid with composite Simpson weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn new(domain: (f64, f64), intervals: usize) -> Grid {
        let n = intervals + intervals % 2;
        let (lo, hi) = domain;
        let h = (hi - lo) / n as f64;
        let nodes: Vec<f64> = (0..=n)
            .map(|i| if i == n { hi } else { lo + h * i as f64 })
            .collect();
        let weights = (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Grid { nodes, weights }
    }

    pub fn for_spec(domain: (f64, f64), spec: &DistanceSpec) -> Grid {
        Grid::new(domain, spec.intervals())
    }

    /// Norm of a vector of grid values of `f^(i) - g^(i)`.
    pub fn norm_of(&self, diff: impl Iterator<Item = f64>, norm: Norm) -> f64 {
        match norm {
            Norm::Inf => diff.map(f64::abs).fold(0.0, f64::max),
            Norm::L1 => diff.zip(&self.weights).map(|(d, w)| w * d.abs()).sum(),
            Norm::L2 => diff
                .zip(&self.weights)
                .map(|(d, w)| w * d * d)
                .sum::<f64>()
                .sqrt(),
        }
    }
}

pub(crate) fn same_domain(a: (f64, f64), b: (f64, f64)) -> bool {
    let tol = 1e-9 * (a.1 - a.0).abs().max(1.0);
    (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol
}

pub(crate) fn common_domain(curves: &[&FunctionalCurve]) -> Result<(f64, f64)> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Empty("no curves".into()))?
        .domain();
    for c in &curves[1..] {
        if !same_domain(first, c.domain()) {
            return Err(Error::DomainMismatch {
                left: first,
                right: c.domain(),
            });
        }
    }
    Ok(first)
}

/// Distance between two curves over their common domain.
pub fn distance(a: &FunctionalCurve, b: &FunctionalCurve, spec: &DistanceSpec) -> Result<f64> {
    spec.validate()?;
    let domain = common_domain(&[a, b])?;
    let grid = Grid::for_spec(domain, spec);
    let fa = a.sample(&grid.nodes, spec.deriv_order)?;
    let fb = b.sample(&grid.nodes, spec.deriv_order)?;
    Ok(grid.norm_of(fa.iter().zip(&fb).map(|(x, y)| x - y), spec.norm))
}

/// Distances between curves that have already been sampled on `grid`.
pub(crate) fn sampled_distance(grid: &Grid, a: &[f64], b: &[f64], norm: Norm) -> f64 {
    grid.norm_of(a.iter().zip(b).map(|(x, y)| x - y), norm)
}

/// Samples every curve's derivative on the common grid.
pub(crate) fn sample_all(
    curves: &[&FunctionalCurve],
    spec: &DistanceSpec,
) -> Result<(Grid, Vec<Vec<f64>>)> {
    spec.validate()?;
    let domain = common_domain(curves)?;
    let grid = Grid::for_spec(domain, spec);
    let samples = curves
        .par_iter()
        .map(|c| c.sample(&grid.nodes, spec.deriv_order))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, samples))
}

/// Symmetric pairwise distance matrix; each unordered pair is computed once.
pub fn distance_matrix(curves: &[FunctionalCurve], spec: &DistanceSpec) -> Result<DistanceMatrix> {
    let refs: Vec<&FunctionalCurve> = curves.iter().collect();
    let (grid, samples) = sample_all(&refs, spec)?;
    Ok(matrix_from_samples(&grid, &samples, spec.norm))
}

pub(crate) fn matrix_from_samples(grid: &Grid, samples: &[Vec<f64>], norm: Norm) -> DistanceMatrix {
    let n = samples.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| sampled_distance(grid, &samples[i], &samples[j], norm))
                .collect()
        })
        .collect();
    let mut m = DistanceMatrix::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, d) in row.into_iter().enumerate() {
            m.set(i, i + 1 + offset, d);
        }
    }
    m
}

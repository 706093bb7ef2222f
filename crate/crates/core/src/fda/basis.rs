//! Clamped B-spline bases over a closed public-input interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default spline order (cubic).
pub const DEFAULT_ORDER: usize = 4;
/// Upper bound on the number of basis functions picked by [`BasisSpec::default_for`].
pub const DEFAULT_MAX_BASIS: usize = 20;

/// A B-spline basis: order, clamped knot vector and the interval it spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRecord", into = "BasisRecord")]
pub struct BasisSpec {
    order: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    order: usize,
    knots: Vec<f64>,
}

impl TryFrom<BasisRecord> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisRecord) -> Result<Self> {
        BasisSpec::from_knots(r.order, r.knots)
    }
}

impl From<BasisSpec> for BasisRecord {
    fn from(b: BasisSpec) -> Self {
        BasisRecord {
            order: b.order,
            knots: b.knots,
        }
    }
}

impl BasisSpec {
    /// Clamped basis with uniformly spaced interior knots.
    pub fn uniform(domain: (f64, f64), n_basis: usize, order: usize) -> Result<Self> {
        let (lo, hi) = domain;
        if order < 2 {
            return Err(Error::InvalidSpec(format!("spline order {order} < 2")));
        }
        if n_basis < order {
            return Err(Error::InvalidSpec(format!(
                "n_basis {n_basis} is smaller than the spline order {order}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpec(format!("invalid domain [{lo}, {hi}]")));
        }
        let interior = n_basis - order;
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(lo, order));
        let spans = (interior + 1) as f64;
        for j in 1..=interior {
            knots.push(lo + (hi - lo) * j as f64 / spans);
        }
        knots.extend(std::iter::repeat_n(hi, order));
        Ok(BasisSpec { order, knots })
    }

    /// Default basis for `distinct_points` distinct abscissae: cubic, with
    /// `min(ceil(P/2), 20)` functions, never fewer than the order and never
    /// more than the number of points.
    pub fn default_for(domain: (f64, f64), distinct_points: usize) -> Result<Self> {
        if distinct_points < DEFAULT_ORDER {
            return Err(Error::UnderDetermined {
                points: distinct_points,
                n_basis: DEFAULT_ORDER,
                context: None,
            });
        }
        let n = distinct_points
            .div_ceil(2)
            .min(DEFAULT_MAX_BASIS)
            .max(DEFAULT_ORDER)
            .min(distinct_points);
        Self::uniform(domain, n, DEFAULT_ORDER)
    }

    /// Builds a basis from an explicit knot vector. The vector must be
    /// non-decreasing with `order` repeated knots at each end.
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidSpec("spline order must be positive".into()));
        }
        if knots.len() < 2 * order {
            return Err(Error::InvalidSpec(format!(
                "{} knots are too few for order {order}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidSpec("knots must be finite and non-decreasing".into()));
        }
        let lo = knots[0];
        let hi = knots[knots.len() - 1];
        if lo >= hi {
            return Err(Error::InvalidSpec("knot vector spans an empty domain".into()));
        }
        let clamped_lo = knots[..order].iter().all(|&k| k == lo);
        let clamped_hi = knots[knots.len() - order..].iter().all(|&k| k == hi);
        let interior_ok = knots[order..knots.len() - order]
            .iter()
            .all(|&k| k > lo && k < hi);
        if !(clamped_lo && clamped_hi && interior_ok) {
            return Err(Error::InvalidSpec("knot vector is not clamped".into()));
        }
        Ok(BasisSpec { order, knots })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.knots.len() - self.order]
    }

    pub fn contains(&self, y: f64) -> bool {
        let (lo, hi) = self.domain();
        y >= lo && y <= hi
    }

    pub(crate) fn check_contains(&self, y: f64) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            let (lo, hi) = self.domain();
            Err(Error::OutsideDomain { value: y, lo, hi })
        }
    }

    /// Index `s` of the knot span with `knots[s] <= y < knots[s + 1]`; the
    /// right end of the domain belongs to the last non-empty span.
    pub(crate) fn find_span(&self, y: f64) -> usize {
        let p = self.degree();
        let n = self.n_basis();
        if y >= self.knots[n] {
            return n - 1;
        }
        if y <= self.knots[p] {
            return p;
        }
        let (mut low, mut high) = (p, n);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if y < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// The `order` basis functions that are non-zero at `y`, together with
    /// the index of the first one.
    pub(crate) fn nonzero_basis(&self, y: f64) -> (usize, Vec<f64>) {
        let p = self.degree();
        let span = self.find_span(y);
        let t = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = y - t[span + 1 - j];
            right[j] = t[span + j] - y;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { values[r] / denom } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span - p, values)
    }

    /// Basis of the derivative: same knots without the outer pair, one order lower.
    pub(crate) fn derivative_basis(&self) -> BasisSpec {
        BasisSpec {
            order: self.order - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        }
    }
}

/// Builds a clamped uniform basis; errors when `n_basis < order`.
pub fn make_basis(domain: (f64, f64), n_basis: usize, order: usize) -> Result<BasisSpec> {
    BasisSpec::uniform(domain, n_basis, order)
}

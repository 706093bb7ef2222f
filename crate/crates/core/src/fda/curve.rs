//! Spline curves: least-squares fitting and derivative evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::BasisSpec;
use crate::error::{Error, Result};

/// A function of the public input represented in a B-spline basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRecord", into = "CurveRecord")]
pub struct FunctionalCurve {
    basis: BasisSpec,
    coefficients: Vec<f64>,
}

/// Flat `{order, knots, coefficients}` form used in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRecord {
    pub order: usize,
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl TryFrom<CurveRecord> for FunctionalCurve {
    type Error = Error;

    fn try_from(r: CurveRecord) -> Result<Self> {
        let basis = BasisSpec::from_knots(r.order, r.knots)?;
        FunctionalCurve::new(basis, r.coefficients)
    }
}

impl From<FunctionalCurve> for CurveRecord {
    fn from(c: FunctionalCurve) -> Self {
        CurveRecord {
            order: c.basis.order(),
            knots: c.basis.knots().to_vec(),
            coefficients: c.coefficients,
        }
    }
}

impl FunctionalCurve {
    pub fn new(basis: BasisSpec, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.n_basis() {
            return Err(Error::InvalidSpec(format!(
                "{} coefficients for {} basis functions",
                coefficients.len(),
                basis.n_basis()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec("non-finite spline coefficient".into()));
        }
        Ok(FunctionalCurve {
            basis,
            coefficients,
        })
    }

    /// The constant function `value` in `basis` (B-splines sum to one).
    pub fn constant(basis: BasisSpec, value: f64) -> Self {
        let coefficients = vec![value; basis.n_basis()];
        FunctionalCurve {
            basis,
            coefficients,
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn domain(&self) -> (f64, f64) {
        self.basis.domain()
    }

    /// Value of the `deriv_order`-th derivative at `y`. Orders at or above
    /// the spline order are identically zero.
    pub fn eval(&self, y: f64, deriv_order: usize) -> Result<f64> {
        self.basis.check_contains(y)?;
        if deriv_order >= self.basis.order() {
            return Ok(0.0);
        }
        if deriv_order == 0 {
            return Ok(self.de_boor(y));
        }
        Ok(self.derivative(deriv_order).de_boor(y))
    }

    /// The derivative as a spline of lower order. Requires `deriv_order < order`.
    pub(crate) fn derivative(&self, deriv_order: usize) -> FunctionalCurve {
        debug_assert!(deriv_order < self.basis.order());
        let mut curve = self.clone();
        for _ in 0..deriv_order {
            curve = curve.differentiate_once();
        }
        curve
    }

    fn differentiate_once(&self) -> FunctionalCurve {
        let p = self.basis.degree() as f64;
        let t = self.basis.knots();
        let k = self.basis.order();
        let coefficients = self
            .coefficients
            .windows(2)
            .enumerate()
            .map(|(j, c)| {
                let span = t[j + k] - t[j + 1];
                if span > 0.0 {
                    p * (c[1] - c[0]) / span
                } else {
                    0.0
                }
            })
            .collect();
        FunctionalCurve {
            basis: self.basis.derivative_basis(),
            coefficients,
        }
    }

    /// de Boor evaluation of the curve itself; `y` must lie in the domain.
    fn de_boor(&self, y: f64) -> f64 {
        let p = self.basis.degree();
        let t = self.basis.knots();
        let span = self.basis.find_span(y);
        let mut d: Vec<f64> = self.coefficients[span - p..=span].to_vec();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let left = t[j + span - p];
                let right = t[j + 1 + span - r];
                let alpha = if right > left {
                    (y - left) / (right - left)
                } else {
                    0.0
                };
                d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
            }
        }
        d[p]
    }

    /// Samples the `deriv_order`-th derivative at each of `ys` (all inside the domain).
    pub fn sample(&self, ys: &[f64], deriv_order: usize) -> Result<Vec<f64>> {
        if let Some(&bad) = ys.iter().find(|&&y| !self.basis.contains(y)) {
            self.basis.check_contains(bad)?;
        }
        if deriv_order >= self.basis.order() {
            return Ok(vec![0.0; ys.len()]);
        }
        let d = self.derivative(deriv_order);
        Ok(ys.iter().map(|&y| d.de_boor(y)).collect())
    }

    /// Curve scaled by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        FunctionalCurve {
            basis: self.basis.clone(),
            coefficients: self.coefficients.iter().map(|c| alpha * c).collect(),
        }
    }

    /// Curve shifted by the constant `c`.
    pub fn shifted(&self, c: f64) -> Self {
        FunctionalCurve {
            basis: self.basis.clone(),
            coefficients: self.coefficients.iter().map(|x| x + c).collect(),
        }
    }

    /// Largest minus smallest value over `n + 1` evenly spaced points.
    pub(crate) fn value_range(&self, n: usize) -> f64 {
        let (lo, hi) = self.domain();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..=n {
            let y = if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            };
            let v = self.de_boor(y);
            min = min.min(v);
            max = max.max(v);
        }
        max - min
    }
}

/// Least-squares projector for a fixed set of abscissae: the minimum-norm
/// pseudo-inverse of the B-spline design matrix, reusable across value vectors.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    basis: BasisSpec,
    pinv: DMatrix<f64>,
}

impl LeastSquaresFit {
    pub fn new(ys: &[f64], basis: &BasisSpec) -> Result<Self> {
        for &y in ys {
            if !y.is_finite() {
                return Err(Error::InvalidSpec("non-finite abscissa".into()));
            }
            basis.check_contains(y)?;
        }
        let distinct = count_distinct(ys);
        if distinct < basis.n_basis() {
            return Err(Error::UnderDetermined {
                points: distinct,
                n_basis: basis.n_basis(),
                context: None,
            });
        }
        let m = ys.len();
        let n = basis.n_basis();
        let mut design = DMatrix::<f64>::zeros(m, n);
        for (row, &y) in ys.iter().enumerate() {
            let (first, values) = basis.nonzero_basis(y);
            for (offset, v) in values.into_iter().enumerate() {
                design[(row, first + offset)] = v;
            }
        }
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.max();
        let tol = max_sv * (m.max(n) as f64) * f64::EPSILON;
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::InvalidSpec(format!("pseudo-inverse failed: {e}")))?;
        Ok(LeastSquaresFit {
            basis: basis.clone(),
            pinv,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn n_points(&self) -> usize {
        self.pinv.ncols()
    }

    /// Coefficients minimizing the squared residual to `values`.
    pub fn fit(&self, values: &[f64]) -> Result<FunctionalCurve> {
        if values.len() != self.pinv.ncols() {
            return Err(Error::InvalidSpec(format!(
                "{} values for {} abscissae",
                values.len(),
                self.pinv.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite value".into()));
        }
        let coefficients = (0..self.pinv.nrows())
            .map(|r| {
                self.pinv
                    .row(r)
                    .iter()
                    .zip(values)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
            })
            .collect();
        FunctionalCurve::new(self.basis.clone(), coefficients)
    }
}

fn count_distinct(ys: &[f64]) -> usize {
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

/// Least-squares spline through `(y, v)` points.
pub fn fit_curve(points: &[(f64, f64)], basis: &BasisSpec) -> Result<FunctionalCurve> {
    let ys: Vec<f64> = points.iter().map(|p| p.0).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.1).collect();
    LeastSquaresFit::new(&ys, basis)?.fit(&vs)
}

/// Value of the `deriv_order`-th derivative of `curve` at `y`.
pub fn eval_curve(curve: &FunctionalCurve, y: f64, deriv_order: usize) -> Result<f64> {
    curve.eval(y, deriv_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::basis::make_basis;

    fn sample_points(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (y, f(y))
            })
            .collect()
    }

    #[test]
    fn constant_is_reproduced() {
        let basis = make_basis((0.0, 3.0), 8, 4).unwrap();
        let curve = fit_curve(&sample_points(|_| 5.0, 0.0, 3.0, 13), &basis).unwrap();
        for i in 0..=60 {
            let y = 3.0 * i as f64 / 60.0;
            assert!((curve.eval(y, 0).unwrap() - 5.0).abs() < 1e-9);
            assert!(curve.eval(y, 1).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_and_its_derivative() {
        let basis = make_basis((0.0, 1.0), 6, 4).unwrap();
        let curve = fit_curve(&sample_points(|y| y * y, 0.0, 1.0, 15), &basis).unwrap();
        for i in 0..=50 {
            let y = i as f64 / 50.0;
            assert!((curve.eval(y, 0).unwrap() - y * y).abs() <= 1e-8);
        }
        assert!((curve.eval(0.5, 1).unwrap() - 1.0).abs() <= 1e-6);
        assert!((curve.eval(0.3, 2).unwrap() - 2.0).abs() <= 1e-6);
        assert_eq!(curve.eval(0.3, 4).unwrap(), 0.0);
        assert_eq!(curve.eval(0.3, 9).unwrap(), 0.0);
    }

    #[test]
    fn under_determined_fit() {
        let basis = make_basis((0.0, 1.0), 4, 4).unwrap();
        let pts = [(0.0, 1.0), (0.5, 2.0), (1.0, 0.0)];
        assert!(matches!(
            fit_curve(&pts, &basis),
            Err(Error::UnderDetermined { points: 3, n_basis: 4, .. })
        ));
        // Repeated abscissae do not count twice.
        let pts = [(0.0, 1.0), (0.0, 2.0), (0.5, 2.0), (1.0, 0.0)];
        assert!(fit_curve(&pts, &basis).is_err());
    }

    #[test]
    fn outside_domain() {
        let basis = make_basis((0.0, 1.0), 4, 4).unwrap();
        let pts = sample_points(|y| y, 0.0, 1.5, 6);
        assert!(matches!(
            fit_curve(&pts, &basis),
            Err(Error::OutsideDomain { .. })
        ));
        let curve = fit_curve(&sample_points(|y| y, 0.0, 1.0, 6), &basis).unwrap();
        assert!(curve.eval(1.0 + 1e-9, 0).is_err());
        assert!(curve.eval(-0.1, 1).is_err());
    }

    #[test]
    fn rank_deficient_fit_is_min_norm() {
        // No samples fall in the middle span: the design matrix is rank deficient
        // but the data are still interpolated.
        let basis = make_basis((0.0, 3.0), 6, 4).unwrap();
        let ys = [0.0, 0.2, 0.4, 0.6, 0.8, 2.4, 2.6, 2.8, 3.0];
        let pts: Vec<_> = ys.iter().map(|&y| (y, 2.0 * y + 1.0)).collect();
        let curve = fit_curve(&pts, &basis).unwrap();
        for &(y, v) in &pts {
            assert!((curve.eval(y, 0).unwrap() - v).abs() < 1e-9);
        }
    }

    #[test]
    fn record_round_trip() {
        let basis = make_basis((0.0, 2.0), 5, 3).unwrap();
        let curve = FunctionalCurve::new(basis, vec![1.0, -2.0, 0.5, 3.0, 4.0]).unwrap();
        let json = serde_json::to_string(&curve).unwrap();
        assert!(json.contains("\"order\":3"));
        let back: FunctionalCurve = serde_json::from_str(&json).unwrap();
        assert_eq!(back, curve);
    }

    #[test]
    fn coefficient_count_checked() {
        let basis = make_basis((0.0, 1.0), 4, 4).unwrap();
        assert!(FunctionalCurve::new(basis.clone(), vec![0.0; 3]).is_err());
        assert!(FunctionalCurve::new(basis, vec![f64::NAN; 4]).is_err());
    }
}

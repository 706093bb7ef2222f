//! B-spline bases, curve fitting and functional distances.

pub mod basis;
pub mod curve;
pub mod distance;

pub use basis::{make_basis, BasisSpec, DEFAULT_MAX_BASIS, DEFAULT_ORDER};
pub use curve::{eval_curve, fit_curve, CurveRecord, FunctionalCurve, LeastSquaresFit};
pub use distance::{distance, distance_matrix, DistanceSpec, Grid, Norm, DEFAULT_GRID_N, MIN_GRID_N};

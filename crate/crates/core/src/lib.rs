//! Numerical forward-invariance toolkit for `dx/dt = f(t, x)`.
//!
//! Sets are checked for being majorant to the right (forward invariant) with
//! directional Dini derivatives, Euler polygons kept inside the set, grid
//! approximations of the Okamura chain distance, proximal barriers and scalar
//! comparison equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod expr;
pub mod field;
pub mod comparison;
pub mod dini;
pub mod integrate;
pub mod okamura;
pub mod invariance;
pub mod polygon;
pub mod report;
pub mod sampling;
pub mod sets;

pub use error::{Error, Result};
pub use expr::{parse_expression, Expr, ParseError};
pub use field::{eval_field, FieldSpec, Window};
pub use integrate::{integrate, Termination, Trajectory};
pub use sampling::sample_boundary;
pub use sets::{ConstraintSet, ImplicitSet, SampledSet, Tube};
pub use report::{CheckReport, Sample, Verdict};

/// Accuracy target for root polishing on level sets.
pub const DELTA_ROOT: f64 = 1e-9;
/// Band for classifying a point as lying on a boundary.
pub const DELTA_BAND: f64 = 1e-6;
/// Default strictness margin for sign-based verdicts.
pub const DEFAULT_MARGIN: f64 = 1e-5;

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

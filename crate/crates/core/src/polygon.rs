//! Euler polygons kept inside a closed set, their refinement limit, and the
//! scalar sub/supersolution bracket.

use serde::{Deserialize, Serialize};

use crate::dini::{dini, DiniKind};
use crate::error::{Error, Result};
use crate::field::{norm_diff, FieldSpec};
use crate::integrate::{rk4_step, step_grid, Termination, Trajectory};
use crate::sets::{ConstraintSet, Tube};
use crate::{norm, DEFAULT_MARGIN, DELTA_BAND};

/// Candidate steps `eps * 2^-i` tried by [`admissible_step`].
pub const CANDIDATES: usize = 16;
/// Points of the shared grid used to compare polygon runs.
pub const COMPARISON_GRID: usize = 1001;
/// Grid times at which the bracket premises are checked.
pub const PREMISE_SAMPLES: usize = 64;

/// Searches `(t1, x1)` in the set with `t0 < t1 < t0 + eps` and
/// `|(x1 - x0)/(t1 - t0) - f(t0, x0)| < eps`, projecting Euler predictions
/// back onto the set. `None` means no candidate qualified at this resolution.
pub fn admissible_step<S: ConstraintSet + ?Sized>(
    set: &S,
    field: &FieldSpec,
    t0: f64,
    x0: &[f64],
    eps: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    if x0.len() != set.dimension() || x0.len() != field.dimension() {
        return Err(Error::Dimension { expected: set.dimension(), got: x0.len() });
    }
    if set.residual(t0, x0)? > DELTA_BAND {
        return Err(Error::InvalidStart { t: t0, x: x0.to_vec() });
    }
    let f0 = field.eval(t0, x0)?;
    for i in 1..=CANDIDATES {
        let h = eps * 0.5f64.powi(i as i32);
        let t1 = t0 + h;
        let y: Vec<f64> = x0.iter().zip(&f0).map(|(a, b)| a + h * b).collect();
        let Some((t, x)) = set.project(t0, t1, eps, &y)? else { continue };
        if satisfies_step_condition(&f0, t0, x0, t, &x, eps) {
            return Ok(Some((t, x)));
        }
    }
    Ok(None)
}

/// The quotient condition relating two consecutive polygon vertices.
pub fn satisfies_step_condition(f0: &[f64], t0: f64, x0: &[f64], t1: f64, x1: &[f64], eps: f64) -> bool {
    if !(t0 < t1 && t1 < t0 + eps) {
        return false;
    }
    let dt = t1 - t0;
    let q: Vec<f64> = x1.iter().zip(x0).zip(f0).map(|((a, b), f)| (a - b) / dt - f).collect();
    norm(&q) < eps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRun {
    pub epsilon: f64,
    pub vertices: Vec<(f64, Vec<f64>)>,
    pub trajectory: Trajectory,
    /// Largest observed `|dX| / |dt|` between consecutive vertices.
    pub lipschitz_cert: f64,
    /// Time at which no admissible step was found, if any.
    pub stalled: Option<f64>,
}

/// Chains admissible steps with `eps = 1/n` from `(t0, x0)` until
/// `t >= t0 + horizon`. A stall returns the partial run, flagged.
pub fn build_polygon<S: ConstraintSet + ?Sized>(
    set: &S,
    field: &FieldSpec,
    t0: f64,
    x0: &[f64],
    n: usize,
    horizon: f64,
) -> Result<PolygonRun> {
    if n < 2 {
        return Err(Error::invalid("N must be at least 2 so that eps = 1/N < 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let eps = 1.0 / n as f64;
    let end = t0 + horizon;
    let mut vertices = vec![(t0, x0.to_vec())];
    let mut lipschitz_cert = 0.0f64;
    let mut stalled = None;
    loop {
        let (t, x) = vertices.last().unwrap().clone();
        if t >= end {
            break;
        }
        match admissible_step(set, field, t, &x, eps)? {
            Some((t1, x1)) => {
                lipschitz_cert = lipschitz_cert.max(norm_diff(&x1, &x) / (t1 - t));
                vertices.push((t1, x1));
            }
            None => {
                stalled = Some(t);
                break;
            }
        }
    }
    let trajectory = Trajectory {
        times: vertices.iter().map(|v| v.0).collect(),
        states: vertices.iter().map(|v| v.1.clone()).collect(),
        terminated: if stalled.is_some() { Termination::StepFailure } else { Termination::ReachedT1 },
        step: eps,
    };
    Ok(PolygonRun { epsilon: eps, vertices, trajectory, lipschitz_cert, stalled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonLimit {
    pub schedule: Vec<usize>,
    pub runs: Vec<PolygonRun>,
    /// Sup-distance between consecutive runs on the shared grid.
    pub sup_distances: Vec<f64>,
    pub strictly_decreasing: bool,
    pub non_increasing: bool,
    /// The finest run, taken as the constructed in-set solution.
    pub solution: Trajectory,
}

/// Builds one polygon per `N` in an increasing schedule and measures how
/// consecutive runs approach each other.
pub fn polygon_limit<S: ConstraintSet + ?Sized>(
    set: &S,
    field: &FieldSpec,
    t0: f64,
    x0: &[f64],
    schedule: &[usize],
    horizon: f64,
) -> Result<PolygonLimit> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("N schedule must be nonempty and strictly increasing"));
    }
    let mut runs = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let run = build_polygon(set, field, t0, x0, n, horizon)?;
        if let Some(t) = run.stalled {
            return Err(Error::Stalled { n, t });
        }
        runs.push(run);
    }
    let grid: Vec<f64> = (0..COMPARISON_GRID)
        .map(|i| t0 + horizon * i as f64 / (COMPARISON_GRID - 1) as f64)
        .collect();
    let sup_distances: Vec<f64> = runs
        .windows(2)
        .map(|w| sup_distance(&w[0].trajectory, &w[1].trajectory, &grid))
        .collect();
    let strictly_decreasing = sup_distances.windows(2).all(|w| w[1] < w[0]);
    let non_increasing = sup_distances.windows(2).all(|w| w[1] <= w[0]);
    let solution = runs.last().unwrap().trajectory.clone();
    Ok(PolygonLimit {
        schedule: schedule.to_vec(),
        runs,
        sup_distances,
        strictly_decreasing,
        non_increasing,
        solution,
    })
}

/// Largest distance between two trajectories over the given times.
pub fn sup_distance(a: &Trajectory, b: &Trajectory, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| norm_diff(&a.interpolate(t), &b.interpolate(t)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeSide {
    Lower,
    Upper,
}

/// A sampled failure of `D_+ omega1 <= f(t, omega1)` or `D^+ omega2 >= f(t, omega2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseViolation {
    pub t: f64,
    pub side: TubeSide,
    pub dini: f64,
    pub field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronRun {
    pub trajectory: Trajectory,
    /// Largest correction applied to keep the state inside the tube.
    pub max_clip: f64,
    pub premise_violations: Vec<PremiseViolation>,
    pub premise_samples: usize,
}

impl PerronRun {
    pub fn premises_hold(&self) -> bool {
        self.premise_violations.is_empty()
    }
}

/// Integrates a scalar equation inside `omega1 <= x <= omega2`, clipping the
/// state to the tube after each RK4 step. The premises of the bracket are
/// checked first; violations are reported and the solve proceeds.
pub fn perron_tube_solve(field: &FieldSpec, tube: &Tube, x0: f64, step: f64) -> Result<PerronRun> {
    if field.dimension() != 1 {
        return Err(Error::Dimension { expected: 1, got: field.dimension() });
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    let (a, b) = tube.interval();
    let (lo, hi) = tube.bounds(a)?;
    if !(lo <= x0 && x0 <= hi) {
        return Err(Error::InvalidStart { t: a, x: vec![x0] });
    }
    let f = |t: f64, x: f64| -> Result<f64> { Ok(field.eval(t, &[x])?[0]) };
    let mut premise_violations = Vec::new();
    for i in 0..PREMISE_SAMPLES {
        let t = a + (b - a) * i as f64 / PREMISE_SAMPLES as f64;
        let (w1, w2) = tube.bounds(t)?;
        let d1 = dini(|s| Ok(tube.omega1().eval(s, &[])?), t, DiniKind::LowerRight)?.value;
        let f1 = f(t, w1)?;
        if d1 - f1 > DEFAULT_MARGIN * (1.0 + f1.abs()) {
            premise_violations.push(PremiseViolation { t, side: TubeSide::Lower, dini: d1, field: f1 });
        }
        let d2 = dini(|s| Ok(tube.omega2().eval(s, &[])?), t, DiniKind::UpperRight)?.value;
        let f2 = f(t, w2)?;
        if f2 - d2 > DEFAULT_MARGIN * (1.0 + f2.abs()) {
            premise_violations.push(PremiseViolation { t, side: TubeSide::Upper, dini: d2, field: f2 });
        }
    }
    let (n, h) = step_grid(a, b, step);
    let mut times = vec![a];
    let mut states = vec![vec![x0]];
    let mut max_clip = 0.0f64;
    let mut terminated = Termination::ReachedT1;
    for i in 0..n {
        let t = a + i as f64 * h;
        let t_next = if i + 1 == n { b } else { a + (i + 1) as f64 * h };
        let x = states.last().unwrap().clone();
        let next = match rk4_step(|s, y| field.eval(s, y), t, &x, h) {
            Ok(v) if v[0].is_finite() => v[0],
            _ => {
                terminated = Termination::StepFailure;
                break;
            }
        };
        let (w1, w2) = tube.bounds(t_next)?;
        let clipped = next.clamp(w1, w2);
        max_clip = max_clip.max((clipped - next).abs());
        times.push(t_next);
        states.push(vec![clipped]);
    }
    Ok(PerronRun {
        trajectory: Trajectory { times, states, terminated, step: h },
        max_clip,
        premise_violations,
        premise_samples: PREMISE_SAMPLES,
    })
}

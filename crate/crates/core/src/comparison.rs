//! Comparison checks: a functional `S` of the vector solution is bounded by
//! the scalar equation `ds/dt = F(t, s)` and its majorant curve `omega`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dini::{dini, directional_upper_dini_with, DiniKind};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{FieldSpec, Window};
use crate::integrate::integrate;
use crate::invariance::random_direction;
use crate::report::{CheckReport, Sample, Verdict};
use crate::norm;

/// Tube tolerance for trajectory follow-ups.
pub const TUBE_TOL: f64 = 1e-4;
/// Step of every follow-up trajectory.
pub const FOLLOW_STEP: f64 = 1e-3;
/// Time samples on which surface points are drawn for the strict test.
pub const SURFACE_TIMES: usize = 4;
/// Trajectories integrated by the conclusion checks.
pub const FOLLOW_TRAJECTORIES: usize = 16;
/// Grid size of the scalar premise run by the tube checks.
pub const PREMISE_SAMPLES: usize = 32;

/// The functional bounded by the scalar equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SFunction {
    /// Euclidean norm `|x|`.
    Norm,
    /// `max(x1, ..., xk)`.
    Max,
    /// A user expression; `kamke` asserts `D+ S(x(t)) <= S(D+ x(t))`.
    Expr { expr: Expr, kamke: bool },
}

impl SFunction {
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        match self {
            SFunction::Norm => Ok(norm(x)),
            SFunction::Max => Ok(x.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            SFunction::Expr { expr, .. } => Ok(expr.eval(t, x)?),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        matches!(self, SFunction::Expr { expr, .. } if expr.depends_on_time())
    }

    pub fn has_kamke_property(&self) -> bool {
        match self {
            SFunction::Norm | SFunction::Max => true,
            SFunction::Expr { kamke, .. } => *kamke,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Strict test of `S(f)` against `D_+ omega` on the surface `S(x) = omega(t)`.
    Surface,
    /// Frozen-direction test `D+[f]S <= F(t, S)`.
    Directional,
    /// Pointwise test `S(f) <= F(t, S(x))`.
    Pointwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonProblem {
    pub field: FieldSpec,
    pub s: SFunction,
    /// Right-hand side of the scalar equation, in `t` and `s`.
    pub f_major: Expr,
    pub omega: Expr,
    pub interval: (f64, f64),
    pub window: Window,
    pub mode: Mode,
}

impl ComparisonProblem {
    pub fn new(
        field: FieldSpec,
        s: SFunction,
        f_major: Expr,
        omega: Expr,
        interval: (f64, f64),
        window: Window,
        mode: Mode,
    ) -> Result<Self> {
        if window.dimension() != field.dimension() {
            return Err(Error::Dimension { expected: field.dimension(), got: window.dimension() });
        }
        if let SFunction::Expr { expr, .. } = &s {
            if expr.max_state_index() > field.dimension() {
                return Err(Error::invalid(format!("S references x{}", expr.max_state_index())));
            }
        }
        if mode != Mode::Directional && s.depends_on_time() {
            return Err(Error::invalid("this mode needs S independent of t"));
        }
        if f_major.max_state_index() > 1 {
            return Err(Error::invalid("F may only use t and s"));
        }
        if omega.depends_on_state() {
            return Err(Error::invalid("omega must be a function of t only"));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::invalid("comparison interval is empty"));
        }
        Ok(ComparisonProblem { field, s, f_major, omega, interval, window, mode })
    }

    fn omega_at(&self, t: f64) -> Result<f64> {
        Ok(self.omega.eval(t, &[])?)
    }

    fn big_f(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.f_major.eval(t, &[s])?)
    }

    /// Root of `S(t, r d) = omega(t)` along the ray `r d` from the origin.
    fn surface_point(&self, t: f64, d: &[f64]) -> Result<Option<Vec<f64>>> {
        let w = self.omega_at(t)?;
        let origin = vec![0.0; d.len()];
        if !self.window.contains_state(&origin) {
            return Ok(None);
        }
        let end = self.window.ray_exit(&origin, d);
        let at = |r: f64| -> Vec<f64> { d.iter().map(|c| r * c).collect() };
        let g = |r: f64| -> Result<f64> { Ok(self.s.eval(t, &at(r))? - w) };
        let (mut lo, mut hi) = (0.0, end);
        if !(g(lo)? <= 0.0 && g(hi)? > 0.0) {
            return Ok(None);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid)? <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(at(lo)))
    }

    /// Largest `S(t, x(t)) - omega(t)` along the trajectory from `(t0, x0)`.
    fn tube_excess(&self, t0: f64, x0: &[f64]) -> Result<f64> {
        let tr = integrate(&self.field, t0, x0, self.interval.1, FOLLOW_STEP, &self.window)?;
        let mut worst = f64::NEG_INFINITY;
        for (t, x) in tr.times.iter().zip(&tr.states) {
            worst = worst.max(self.s.eval(*t, x)? - self.omega_at(*t)?);
        }
        Ok(worst)
    }

    /// Follow-up trajectories from `(a, x0)` with `S(a, x0) <= omega(a)`:
    /// half on the surface along random rays, half inside.
    fn conclusion_samples<R: Rng>(&self, rng: &mut R, margin: f64) -> Result<Vec<Sample>> {
        let a = self.interval.0;
        let w = self.omega_at(a)?;
        let k = self.field.dimension();
        let mut starts = Vec::new();
        let mut tries = 0;
        while starts.len() < FOLLOW_TRAJECTORIES / 2 && tries < 64 * FOLLOW_TRAJECTORIES {
            tries += 1;
            if let Some(x) = self.surface_point(a, &random_direction(rng, k))? {
                starts.push(x);
            }
        }
        tries = 0;
        while starts.len() < FOLLOW_TRAJECTORIES && tries < 1000 * FOLLOW_TRAJECTORIES {
            tries += 1;
            let x = self.window.sample_state(rng);
            if self.s.eval(a, &x)? <= w {
                starts.push(x);
            }
        }
        starts
            .into_iter()
            .map(|x| {
                let excess = self.tube_excess(a, &x)?;
                Ok(Sample::new(a, x, excess, TUBE_TOL, margin))
            })
            .collect()
    }
}

/// Verifies that `x <= omega(t)` is a right majorant of `ds/dt = F(t, s)`.
///
/// The boundary inequality `F(t, omega) <= D_+ omega` is recorded as
/// diagnostics. The verdict comes from integrating the scalar equation from
/// `omega(t_i)` and checking `s(t) <= omega(t) + 1e-4`.
pub fn check_scalar_majorant(
    f_major: &Expr,
    omega: &Expr,
    interval: (f64, f64),
    samples: usize,
    margin: f64,
) -> Result<CheckReport> {
    if samples < 8 {
        return Err(Error::invalid("the scalar premise needs at least 8 samples"));
    }
    if f_major.max_state_index() > 1 || omega.depends_on_state() {
        return Err(Error::invalid("F must use only t and s, omega only t"));
    }
    let (a, b) = interval;
    if !(a < b) {
        return Err(Error::invalid("interval is empty"));
    }
    let scalar = FieldSpec::new(vec![f_major.clone()], 1.0, None)?;
    let window = Window::new((a, b), vec![-1e12], vec![1e12])?;
    let mut boundary = Vec::with_capacity(samples);
    let mut forward = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = a + (b - a) * i as f64 / samples as f64;
        let w = omega.eval(t, &[])?;
        let d = dini(|s| Ok(omega.eval(s, &[])?), t, DiniKind::LowerRight)?.value;
        let rhs = f_major.eval(t, &[w])?;
        boundary.push(Sample::new(t, vec![w], rhs - d, 2.0 * margin, margin));
        let tr = integrate(&scalar, t, &[w], b, FOLLOW_STEP, &window)?;
        let mut excess = f64::NEG_INFINITY;
        for (s, x) in tr.times.iter().zip(&tr.states) {
            excess = excess.max(x[0] - omega.eval(*s, &[])?);
        }
        forward.push(Sample::new(t, vec![w], excess, TUBE_TOL, margin));
    }
    let mut report = CheckReport::new(forward, margin, 0);
    let boundary_verdict = crate::report::aggregate(&boundary);
    if (boundary_verdict == Verdict::Fail) != (report.verdict == Verdict::Fail) {
        report.note(format!(
            "boundary inequality says {boundary_verdict}, integration says {}; integration decides",
            report.verdict
        ));
    }
    report.diagnostics = boundary;
    Ok(report)
}

fn premise(problem: &ComparisonProblem, margin: f64) -> Result<CheckReport> {
    let r = check_scalar_majorant(&problem.f_major, &problem.omega, problem.interval, PREMISE_SAMPLES, margin)?;
    if r.verdict == Verdict::Fail {
        return Err(Error::PremiseFailed(format!(
            "s <= omega(t) is not a right majorant of ds/dt = {} (largest excess {:.3e})",
            problem.f_major,
            r.max_raw()
        )));
    }
    Ok(r)
}

/// Appends follow-up samples as diagnostics; a pass contradicted by an
/// escaping trajectory is turned into a fail.
fn attach_follow_up(report: &mut CheckReport, follow: Vec<Sample>) {
    let escaped = follow.iter().any(|s| s.classification == Verdict::Fail);
    let worst = follow.iter().map(|s| s.raw).fold(f64::NEG_INFINITY, f64::max);
    report.diagnostics.extend(follow);
    if escaped {
        if report.verdict != Verdict::Fail {
            report.verdict = Verdict::Fail;
            report.note(format!("a follow-up trajectory leaves the tube by {worst:.3e}; the pass is withdrawn"));
        } else {
            report.note(format!("follow-up trajectories leave the tube by up to {worst:.3e}"));
        }
    } else if report.verdict == Verdict::Fail {
        report.note(format!(
            "the test fails, yet every follow-up trajectory stays in the tube (largest excess {worst:.3e}); \
             the condition is sufficient only"
        ));
    }
}

/// Strict test `S(f(t, x)) < D_+ omega(t)` on the surface `S(x) = omega(t)`,
/// found by bisection along `rays` random rays at several times, followed
/// by trajectories from the surface points.
pub fn check_theorem4(problem: &ComparisonProblem, rays: usize, seed: u64, margin: f64) -> Result<CheckReport> {
    if problem.mode != Mode::Surface {
        return Err(Error::invalid("check_theorem4 needs a surface-mode problem"));
    }
    if problem.s.depends_on_time() {
        return Err(Error::invalid("S must not depend on t"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = problem.interval;
    let k = problem.field.dimension();
    let mut samples = Vec::new();
    let mut follow = Vec::new();
    for i in 0..SURFACE_TIMES {
        let t = a + (b - a) * i as f64 / SURFACE_TIMES as f64;
        let d_omega = dini(|s| problem.omega_at(s), t, DiniKind::LowerRight)?.value;
        for _ in 0..rays {
            let d = random_direction(&mut rng, k);
            let Some(x) = problem.surface_point(t, &d)? else { continue };
            let sf = problem.s.eval(t, &problem.field.eval(t, &x)?)?;
            samples.push(Sample::new(t, x.clone(), sf - d_omega, 0.0, margin));
            follow.push(Sample::new(t, x.clone(), problem.tube_excess(t, &x)?, TUBE_TOL, margin));
        }
    }
    if samples.is_empty() {
        return Err(Error::SurfaceNotFound);
    }
    let mut report = CheckReport::new(samples, margin, seed);
    if !problem.s.has_kamke_property() {
        report.note("WARNING: S is not asserted to satisfy D+S(x(t)) <= S(D+x(t)); trajectories decide");
    }
    attach_follow_up(&mut report, follow);
    Ok(report)
}

/// Tests `D+[f]S(t, x) <= F(t, S(t, x))` at random window points, after the
/// scalar premise, then follows trajectories starting in the tube.
pub fn check_theorem7(problem: &ComparisonProblem, samples: usize, seed: u64, margin: f64) -> Result<CheckReport> {
    if problem.mode != Mode::Directional {
        return Err(Error::invalid("check_theorem7 needs a directional-mode problem"));
    }
    premise(problem, margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = problem.interval;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = rng.gen_range(a..b);
        let x = problem.window.sample_state(&mut rng);
        let f0 = problem.field.eval(t, &x)?;
        let d = directional_upper_dini_with(|s, y| problem.s.eval(s, y), &f0, t, &x)?.value;
        let rhs = problem.big_f(t, problem.s.eval(t, &x)?)?;
        out.push(Sample::new(t, x, d - rhs, 2.0 * margin, margin));
    }
    let mut report = CheckReport::new(out, margin, seed);
    let follow = problem.conclusion_samples(&mut rng, margin)?;
    attach_follow_up(&mut report, follow);
    Ok(report)
}

/// Tests `S(f(t, x)) <= F(t, S(x))` pointwise at random window points, after
/// the scalar premise, then follows trajectories starting in the tube.
pub fn check_theorem8(problem: &ComparisonProblem, samples: usize, seed: u64, margin: f64) -> Result<CheckReport> {
    if problem.mode != Mode::Pointwise {
        return Err(Error::invalid("check_theorem8 needs a pointwise-mode problem"));
    }
    if problem.s.depends_on_time() {
        return Err(Error::invalid("S must not depend on t"));
    }
    premise(problem, margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = problem.interval;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = rng.gen_range(a..b);
        let x = problem.window.sample_state(&mut rng);
        let sf = problem.s.eval(t, &problem.field.eval(t, &x)?)?;
        let rhs = problem.big_f(t, problem.s.eval(t, &x)?)?;
        out.push(Sample::new(t, x, sf - rhs, 2.0 * margin, margin));
    }
    let mut report = CheckReport::new(out, margin, seed);
    if !problem.s.has_kamke_property() {
        report.note("WARNING: S is not asserted to satisfy D+S(x(t)) <= S(D+x(t)); trajectories decide");
    }
    let follow = problem.conclusion_samples(&mut rng, margin)?;
    attach_follow_up(&mut report, follow);
    Ok(report)
}

//! Closed sets in `(t, x)`-space: sublevel sets of a class-(L) function,
//! finite samples of a set, and scalar tubes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{norm_diff, Window, ESTIMATE_INFLATION, ESTIMATE_SAMPLES};
use crate::norm;

/// Bisection steps used when pulling a point back onto an implicit set.
pub const PROJECTION_BISECTIONS: usize = 40;

/// `{(t, x) : phi(t, x) <= 0}` inside a window, with `phi` Lipschitz in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSet {
    phi: Expr,
    alpha: f64,
    window: Window,
}

impl ImplicitSet {
    pub fn new(phi: Expr, alpha: f64, window: Window) -> Result<Self> {
        if phi.max_state_index() > window.dimension() {
            return Err(Error::invalid(format!(
                "level-set function references x{} but the window is {}-dimensional",
                phi.max_state_index(),
                window.dimension()
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("Lipschitz constant alpha must be positive, got {alpha}")));
        }
        Ok(ImplicitSet { phi, alpha, window })
    }

    /// Estimates `alpha` as 1.1 times the largest same-time difference quotient
    /// over random window pairs.
    pub fn with_estimated_alpha(phi: Expr, window: Window, seed: u64) -> Result<Self> {
        let probe = ImplicitSet::new(phi, 1.0, window)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sup = 0.0f64;
        for _ in 0..ESTIMATE_SAMPLES {
            let t = probe.window.sample_time(&mut rng);
            let x = probe.window.sample_state(&mut rng);
            let y = probe.window.sample_state(&mut rng);
            let d = norm_diff(&x, &y);
            if d > 0.0 {
                sup = sup.max((probe.phi(t, &x)? - probe.phi(t, &y)?).abs() / d);
            }
        }
        let alpha = (ESTIMATE_INFLATION * sup).max(f64::EPSILON);
        ImplicitSet::new(probe.phi, alpha, probe.window)
    }

    pub fn phi_expr(&self) -> &Expr {
        &self.phi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dimension(&self) -> usize {
        self.window.dimension()
    }

    pub fn phi(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.phi.eval(t, x)?)
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> Result<bool> {
        Ok(self.phi(t, x)? <= 0.0)
    }

    pub fn on_boundary(&self, t: f64, x: &[f64], band: f64) -> Result<bool> {
        Ok(self.phi(t, x)?.abs() <= band)
    }

    /// Central-difference gradient of `phi` in `x`.
    pub fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(x.len());
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = self.phi(t, &probe)?;
            probe[i] = x[i] - h;
            let down = self.phi(t, &probe)?;
            probe[i] = x[i];
            g.push((up - down) / (2.0 * h));
        }
        Ok(g)
    }

    /// Moves `y` along `-grad phi` until `phi <= 0`, then bisects back towards
    /// `y`, always keeping the inside end.
    pub fn project_point(&self, t: f64, y: &[f64]) -> Result<Option<Vec<f64>>> {
        let v0 = self.phi(t, y)?;
        if v0 <= 0.0 {
            return Ok(Some(y.to_vec()));
        }
        let g = self.gradient(t, y)?;
        let gn = norm(&g);
        if !(gn > 0.0) || !gn.is_finite() {
            return Ok(None);
        }
        let d: Vec<f64> = g.iter().map(|c| -c / gn).collect();
        let at = |s: f64| -> Vec<f64> { y.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let mut hi = v0 / gn;
        let mut found = false;
        for _ in 0..60 {
            if matches!(self.phi(t, &at(hi)), Ok(v) if v <= 0.0) {
                found = true;
                break;
            }
            hi *= 2.0;
        }
        if !found {
            return Ok(None);
        }
        let mut lo = 0.0;
        for _ in 0..PROJECTION_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.phi(t, &at(mid))? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(at(hi)))
    }
}

/// A finite sample of a closed set, used through the proximal function
/// `psi(t, x) = min ||x - x*|| + M |t - t*|`.
///
/// `resolution` is a covering radius: every point of the underlying set lies
/// within that distance of a stored point at the same time. A raw point cloud
/// has resolution 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSet {
    points: Vec<(f64, Vec<f64>)>,
    hull_m: f64,
    resolution: f64,
    window: Window,
    slices: Vec<f64>,
}

impl SampledSet {
    pub fn new(points: Vec<(f64, Vec<f64>)>, hull_m: f64, window: Window) -> Result<Self> {
        Self::with_resolution(points, hull_m, 0.0, window)
    }

    pub fn with_resolution(
        points: Vec<(f64, Vec<f64>)>,
        hull_m: f64,
        resolution: f64,
        window: Window,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("sampled set is empty"));
        }
        if !(hull_m > 0.0) {
            return Err(Error::invalid(format!("hull M must be positive, got {hull_m}")));
        }
        if !(resolution >= 0.0) {
            return Err(Error::invalid("resolution must be nonnegative"));
        }
        for (t, x) in &points {
            if !window.contains(*t, x) {
                return Err(Error::invalid(format!("sample ({t}, {x:?}) lies outside the window")));
            }
        }
        let mut slices: Vec<f64> = points.iter().map(|p| p.0).collect();
        slices.sort_by(f64::total_cmp);
        slices.dedup();
        Ok(SampledSet { points, hull_m, resolution, window, slices })
    }

    /// Samples `{phi <= 0}` on a lattice of the given spacing at each time,
    /// adding the boundary crossings on lattice edges. The covering radius is
    /// taken as `spacing * sqrt(k)`.
    pub fn from_implicit(set: &ImplicitSet, times: &[f64], spacing: f64, hull_m: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("lattice spacing must be positive"));
        }
        let w = set.window();
        let k = w.dimension();
        let counts: Vec<usize> = (0..k)
            .map(|i| ((w.upper[i] - w.lower[i]) / spacing).floor() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        if total > 5_000_000 {
            return Err(Error::invalid(format!("lattice with {total} nodes per slice is too fine")));
        }
        let node = |mut idx: usize| -> Vec<f64> {
            let mut x = Vec::with_capacity(k);
            for i in 0..k {
                x.push(w.lower[i] + (idx % counts[i]) as f64 * spacing);
                idx /= counts[i];
            }
            x
        };
        let mut points = Vec::new();
        for &t in times {
            let values: Vec<f64> = (0..total).map(|i| set.phi(t, &node(i))).collect::<Result<_>>()?;
            for i in 0..total {
                let x = node(i);
                if values[i] <= 0.0 {
                    points.push((t, x.clone()));
                }
                let mut stride = 1;
                for d in 0..k {
                    let coord = (i / stride) % counts[d];
                    if coord + 1 < counts[d] {
                        let j = i + stride;
                        if (values[i] <= 0.0) != (values[j] <= 0.0) {
                            let y = node(j);
                            let (inside, outside) = if values[i] <= 0.0 { (x.clone(), y) } else { (y, x.clone()) };
                            points.push((t, bisect_segment(set, t, &inside, &outside)?));
                        }
                    }
                    stride *= counts[d];
                }
            }
        }
        if points.is_empty() {
            return Err(Error::NotFound("no lattice node satisfies phi <= 0".into()));
        }
        SampledSet::with_resolution(points, hull_m, spacing * (k as f64).sqrt(), w.clone())
    }

    pub fn points(&self) -> &[(f64, Vec<f64>)] {
        &self.points
    }

    pub fn hull_m(&self) -> f64 {
        self.hull_m
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dimension(&self) -> usize {
        self.window.dimension()
    }

    /// Sorted distinct sample times.
    pub fn time_slices(&self) -> &[f64] {
        &self.slices
    }

    /// Exact minimum of `||x - x*|| + m |t - t*|` over the stored points, with
    /// the index of the first minimizer.
    pub fn proximal(&self, m: f64, t: f64, x: &[f64]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (i, (ts, xs)) in self.points.iter().enumerate() {
            let lower = m * (t - ts).abs();
            if lower >= best {
                continue;
            }
            let v = norm_diff(x, xs) + lower;
            if v < best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }
}

fn bisect_segment(set: &ImplicitSet, t: f64, inside: &[f64], outside: &[f64]) -> Result<Vec<f64>> {
    let mut a = inside.to_vec();
    let mut b = outside.to_vec();
    for _ in 0..60 {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        if set.phi(t, &mid)? <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

/// A set the Euler-polygon construction can stay inside.
pub trait ConstraintSet {
    fn dimension(&self) -> usize;

    /// Nonpositive exactly on the set.
    fn residual(&self, t: f64, x: &[f64]) -> Result<f64>;

    /// An in-set point near the prediction `(t1, y)`, with its time in
    /// `(t0, t0 + eps)`.
    fn project(&self, t0: f64, t1: f64, eps: f64, y: &[f64]) -> Result<Option<(f64, Vec<f64>)>>;
}

impl ConstraintSet for ImplicitSet {
    fn dimension(&self) -> usize {
        ImplicitSet::dimension(self)
    }

    fn residual(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.phi(t, x)
    }

    fn project(&self, _t0: f64, t1: f64, _eps: f64, y: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(self.project_point(t1, y)?.map(|x| (t1, x)))
    }
}

impl ConstraintSet for SampledSet {
    fn dimension(&self) -> usize {
        SampledSet::dimension(self)
    }

    fn residual(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.proximal(self.hull_m, t, x).0 - self.resolution)
    }

    /// Snaps to the nearest stored point whose time lies in `(t0, t0 + eps)`.
    fn project(&self, t0: f64, t1: f64, eps: f64, y: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let mut best: Option<(f64, usize)> = None;
        for (i, (ts, xs)) in self.points.iter().enumerate() {
            if !(*ts > t0 && *ts < t0 + eps) {
                continue;
            }
            let v = norm_diff(y, xs) + (ts - t1).abs();
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, i));
            }
        }
        Ok(best.map(|(_, i)| self.points[i].clone()))
    }
}

/// Scalar tube `omega1(t) <= x <= omega2(t)` on `[a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    omega1: Expr,
    omega2: Expr,
    interval: (f64, f64),
}

impl Tube {
    pub const ORDER_SAMPLES: usize = 1024;

    pub fn new(omega1: Expr, omega2: Expr, interval: (f64, f64)) -> Result<Self> {
        if omega1.depends_on_state() || omega2.depends_on_state() {
            return Err(Error::invalid("tube boundaries must be functions of t only"));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::invalid("tube interval is empty"));
        }
        let tube = Tube { omega1, omega2, interval };
        for i in 0..Self::ORDER_SAMPLES {
            let t = interval.0 + (interval.1 - interval.0) * i as f64 / Self::ORDER_SAMPLES as f64;
            let (lo, hi) = tube.bounds(t)?;
            if lo > hi {
                return Err(Error::invalid(format!("omega1 > omega2 at t = {t}")));
            }
        }
        Ok(tube)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn omega1(&self) -> &Expr {
        &self.omega1
    }

    pub fn omega2(&self) -> &Expr {
        &self.omega2
    }

    pub fn bounds(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.omega1.eval(t, &[])?, self.omega2.eval(t, &[])?))
    }
}

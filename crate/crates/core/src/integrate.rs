//! Fixed-step classical Runge-Kutta reference solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Window};

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedT1,
    LeftDomain,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminated: Termination,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// Piecewise-linear interpolation, clamped to the covered time span.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.states[i]
            .iter()
            .zip(&self.states[i + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Number of steps and the uniform step length covering `[t0, t1]` with steps
/// no longer than `step`.
pub fn step_grid(t0: f64, t1: f64, step: f64) -> (usize, f64) {
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    (n, (t1 - t0) / n as f64)
}

/// One classical RK4 step of a general right-hand side.
pub fn rk4_step<F>(f: F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(x, h, &k3))?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates from `(t0, x0)` to `t1`, stopping on the window boundary when
/// the state leaves the box.
pub fn integrate(
    field: &FieldSpec,
    t0: f64,
    x0: &[f64],
    t1: f64,
    step: f64,
    window: &Window,
) -> Result<Trajectory> {
    if !(t0 < t1) {
        return Err(Error::invalid(format!("integration interval [{t0}, {t1}] is empty")));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    if x0.len() != field.dimension() || window.dimension() != field.dimension() {
        return Err(Error::Dimension { expected: field.dimension(), got: x0.len() });
    }
    if !window.contains_state(x0) {
        return Err(Error::InvalidStart { t: t0, x: x0.to_vec() });
    }
    let f = |t: f64, x: &[f64]| field.eval(t, x);
    let (n, h) = step_grid(t0, t1, step);
    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut terminated = Termination::ReachedT1;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let x = states.last().unwrap().clone();
        let next = match rk4_step(f, t, &x, h) {
            Ok(v) if v.iter().all(|c| c.is_finite()) => v,
            _ => {
                terminated = Termination::StepFailure;
                break;
            }
        };
        if window.contains_state(&next) {
            times.push(if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * h });
            states.push(next);
            continue;
        }
        // shorten the last step until it ends inside the box
        let (mut lo, mut hi) = (0.0, h);
        let mut inside: Option<Vec<f64>> = None;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            match rk4_step(f, t, &x, mid) {
                Ok(v) if window.contains_state(&v) => {
                    lo = mid;
                    inside = Some(v);
                }
                _ => hi = mid,
            }
        }
        if let Some(v) = inside {
            if lo > 0.0 && t + lo > t {
                times.push(t + lo);
                states.push(v);
            }
        }
        terminated = Termination::LeftDomain;
        break;
    }
    Ok(Trajectory { times, states, terminated, step: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn field(src: &[&str]) -> FieldSpec {
        FieldSpec::new(src.iter().map(|s| parse_expression(s).unwrap()).collect(), 1.0, None).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let w = Window::cube((0.0, 1.0), 1, 10.0).unwrap();
        let tr = integrate(&field(&["-x1"]), 0.0, &[1.0], 1.0, 1e-3, &w).unwrap();
        assert_eq!(tr.terminated, Termination::ReachedT1);
        assert_eq!(tr.final_time(), 1.0);
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rotation_period() {
        let w = Window::cube((0.0, 7.0), 2, 2.0).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let tr = integrate(&field(&["-x2", "x1"]), 0.0, &[1.0, 0.0], tau, 1e-3, &w).unwrap();
        let x = tr.final_state();
        assert!((x[0] - 1.0).abs() < 1e-5 && x[1].abs() < 1e-5);
    }

    #[test]
    fn growth_leaves_window_near_ln2() {
        let w = Window::cube((0.0, 5.0), 1, 2.0).unwrap();
        let step = 1e-3;
        let tr = integrate(&field(&["x1"]), 0.0, &[1.0], 5.0, step, &w).unwrap();
        assert_eq!(tr.terminated, Termination::LeftDomain);
        assert!((tr.final_time() - 2f64.ln()).abs() <= 2.0 * step);
        assert!(tr.final_state()[0] <= 2.0);
        assert!(tr.times.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn step_failure_keeps_partial_run() {
        let w = Window::cube((0.0, 5.0), 1, 10.0).unwrap();
        let tr = integrate(&field(&["log(x1)"]), 0.0, &[0.5], 5.0, 0.1, &w).unwrap();
        assert_eq!(tr.terminated, Termination::StepFailure);
        assert!(!tr.is_empty());
    }

    #[test]
    fn preconditions() {
        let w = Window::cube((0.0, 1.0), 1, 1.0).unwrap();
        let f = field(&["x1"]);
        assert!(integrate(&f, 1.0, &[0.0], 0.0, 0.1, &w).is_err());
        assert!(integrate(&f, 0.0, &[3.0], 1.0, 0.1, &w).is_err());
        assert!(integrate(&f, 0.0, &[0.0], 1.0, 0.0, &w).is_err());
    }

    #[test]
    fn interpolation_is_linear_between_samples() {
        let tr = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![0.0], vec![2.0]],
            terminated: Termination::ReachedT1,
            step: 1.0,
        };
        assert_eq!(tr.interpolate(0.25), vec![0.5]);
        assert_eq!(tr.interpolate(3.0), vec![2.0]);
    }
}

//! The right-hand side `dx/dt = f(t, x)` and the box window it is studied on.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::norm;

/// Number of window samples used when `M` or `K` have to be estimated.
pub const ESTIMATE_SAMPLES: usize = 10_000;
/// Inflation applied to sampled suprema.
pub const ESTIMATE_INFLATION: f64 = 1.1;

/// Finite stand-in for the open domain: a time interval times a state box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub time: (f64, f64),
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(time: (f64, f64), lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("window bounds must be nonempty and of equal length"));
        }
        if !(time.0 <= time.1) {
            return Err(Error::invalid(format!("empty time interval [{}, {}]", time.0, time.1)));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("window box has an empty side"));
        }
        Ok(Window { time, lower, upper })
    }

    /// Symmetric box `[-half, half]^dim`.
    pub fn cube(time: (f64, f64), dim: usize, half: f64) -> Result<Self> {
        Window::new(time, vec![-half; dim], vec![half; dim])
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn contains_state(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.time.0 <= t && t <= self.time.1 && self.contains_state(x)
    }

    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect()
    }

    pub fn sample_time<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.time.0 == self.time.1 {
            self.time.0
        } else {
            rng.gen_range(self.time.0..self.time.1)
        }
    }

    /// Largest `s >= 0` with `x + s*d` still inside the box.
    pub fn ray_exit(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut s = f64::INFINITY;
        for i in 0..x.len() {
            if d[i] > 0.0 {
                s = s.min((self.upper[i] - x[i]) / d[i]);
            } else if d[i] < 0.0 {
                s = s.min((self.lower[i] - x[i]) / d[i]);
            }
        }
        s.max(0.0)
    }
}

/// A vector field given component-wise as expressions in `t, x1..xk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    components: Vec<Expr>,
    bound_m: f64,
    lipschitz_k: Option<f64>,
}

impl FieldSpec {
    pub fn new(components: Vec<Expr>, bound_m: f64, lipschitz_k: Option<f64>) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::invalid("a field needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if c.max_state_index() > k {
                return Err(Error::invalid(format!(
                    "component {} references x{} in a {k}-dimensional system",
                    i + 1,
                    c.max_state_index()
                )));
            }
        }
        if !(bound_m > 0.0) || !bound_m.is_finite() {
            return Err(Error::invalid(format!("bound M must be positive, got {bound_m}")));
        }
        if let Some(kk) = lipschitz_k {
            if !(kk >= 0.0) || !kk.is_finite() {
                return Err(Error::invalid(format!("Lipschitz K must be nonnegative, got {kk}")));
            }
        }
        Ok(FieldSpec { components, bound_m, lipschitz_k })
    }

    /// Parses component sources; `M` and `K` are estimated on `window` when absent.
    pub fn parse(
        sources: &[&str],
        window: &Window,
        bound_m: Option<f64>,
        lipschitz_k: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let components = sources
            .iter()
            .map(|s| parse_expression(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::with_estimates(components, window, bound_m, lipschitz_k, seed)
    }

    pub fn with_estimates(
        components: Vec<Expr>,
        window: &Window,
        bound_m: Option<f64>,
        lipschitz_k: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        if window.dimension() != components.len() {
            return Err(Error::Dimension { expected: components.len(), got: window.dimension() });
        }
        // validate before sampling so a bad reference is reported as such
        let probe = FieldSpec::new(components, 1.0, None)?;
        let (m_est, k_est) = if bound_m.is_none() || lipschitz_k.is_none() {
            probe.estimate_constants(window, seed)?
        } else {
            (0.0, 0.0)
        };
        FieldSpec::new(probe.components, bound_m.unwrap_or(m_est), lipschitz_k.or(Some(k_est)))
    }

    /// Sampled `(M, K)`: 1.1 times the observed sup of `|f|` and of same-time
    /// difference quotients over random pairs.
    pub fn estimate_constants(&self, window: &Window, seed: u64) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sup_f = 0.0f64;
        let mut sup_q = 0.0f64;
        for _ in 0..ESTIMATE_SAMPLES {
            let t = window.sample_time(&mut rng);
            let x = window.sample_state(&mut rng);
            let y = window.sample_state(&mut rng);
            let fx = self.eval(t, &x)?;
            let fy = self.eval(t, &y)?;
            sup_f = sup_f.max(norm(&fx));
            let dx = norm_diff(&x, &y);
            if dx > 0.0 {
                sup_q = sup_q.max(norm_diff(&fx, &fy) / dx);
            }
        }
        Ok(((ESTIMATE_INFLATION * sup_f).max(f64::EPSILON), ESTIMATE_INFLATION * sup_q))
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn lipschitz_k(&self) -> Option<f64> {
        self.lipschitz_k
    }

    pub fn with_bound_m(mut self, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::invalid(format!("bound M must be positive, got {m}")));
        }
        self.bound_m = m;
        Ok(self)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension { expected: self.dimension(), got: x.len() });
        }
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| c.eval(t, x).map_err(|source| Error::Component { component: i + 1, source }))
            .collect()
    }

    /// The field of the time-reversed system `t -> -t`, `f -> -f`, which turns
    /// left-sided questions into right-sided ones.
    pub fn time_reversed(&self) -> FieldSpec {
        let minus_t = Expr::neg(Expr::time());
        FieldSpec {
            components: self
                .components
                .iter()
                .map(|c| Expr::neg(c.substitute_time(&minus_t)))
                .collect(),
            bound_m: self.bound_m,
            lipschitz_k: self.lipschitz_k,
        }
    }
}

/// Component-wise field evaluation.
pub fn eval_field(field: &FieldSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    field.eval(t, x)
}

pub(crate) fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(src: &[&str]) -> FieldSpec {
        let comps = src.iter().map(|s| parse_expression(s).unwrap()).collect();
        FieldSpec::new(comps, 1.0, None).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_field(&field(&["-x1", "-x2"]), 0.0, &[1.0, 0.0]).unwrap(), vec![-1.0, -0.0]);
        assert_eq!(eval_field(&field(&["-x2", "x1"]), 0.0, &[0.0, 1.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(eval_field(&field(&["t"]), 2.0, &[5.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn eval_reports_component_index() {
        let f = field(&["x1", "log(x2)"]);
        match f.eval(0.0, &[1.0, -1.0]) {
            Err(Error::Component { component: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(f.eval(0.0, &[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn rejects_out_of_range_variables_and_bad_bounds() {
        let comps = vec![parse_expression("x2").unwrap()];
        assert!(FieldSpec::new(comps.clone(), 1.0, None).is_err());
        let ok = vec![parse_expression("x1").unwrap()];
        assert!(FieldSpec::new(ok.clone(), 0.0, None).is_err());
        assert!(FieldSpec::new(ok, 1.0, Some(-1.0)).is_err());
    }

    #[test]
    fn estimates_are_inflated_sups() {
        let w = Window::cube((0.0, 1.0), 2, 1.0).unwrap();
        let f = FieldSpec::parse(&["-x1", "-x2"], &w, None, None, 3).unwrap();
        // sup |x| on the square is sqrt(2); every quotient of a linear isometry is 1
        assert!(f.bound_m() <= 1.1 * 2f64.sqrt() + 1e-12);
        assert!(f.bound_m() > 1.1 * 1.3);
        assert!((f.lipschitz_k().unwrap() - 1.1).abs() < 1e-9);
    }

    #[test]
    fn zero_field_still_gets_positive_bound() {
        let w = Window::cube((0.0, 1.0), 1, 1.0).unwrap();
        let f = FieldSpec::parse(&["0"], &w, None, None, 0).unwrap();
        assert!(f.bound_m() > 0.0);
        assert_eq!(f.lipschitz_k(), Some(0.0));
    }

    #[test]
    fn time_reversal_negates_and_flips_time() {
        let f = field(&["t + x1"]).time_reversed();
        // -( (-t) + x1 ) at t = 2, x = 1 gives 1
        assert_eq!(f.eval(2.0, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn ray_exit_distance() {
        let w = Window::cube((0.0, 1.0), 2, 2.0).unwrap();
        assert_eq!(w.ray_exit(&[0.0, 0.0], &[1.0, 0.0]), 2.0);
        assert_eq!(w.ray_exit(&[1.0, 0.0], &[-1.0, 0.0]), 3.0);
    }
}

//! One-sided Dini derivatives estimated on a geometric `h`-ladder, and the
//! frozen-direction operator `D+[f]phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::FieldSpec;

/// First ladder step.
pub const H0: f64 = 1e-2;
/// Rungs per halving of `h`.
pub const RUNGS_PER_OCTAVE: usize = 4;
/// Total rungs; the smallest step is `H0 * 2^-24`.
pub const RUNGS: usize = 96;
/// Rungs in the tail window (the last eight octaves).
pub const TAIL: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiniKind {
    UpperRight,
    LowerRight,
    UpperLeft,
    LowerLeft,
}

impl DiniKind {
    pub fn is_upper(self) -> bool {
        matches!(self, DiniKind::UpperRight | DiniKind::UpperLeft)
    }

    pub fn is_right(self) -> bool {
        matches!(self, DiniKind::UpperRight | DiniKind::LowerRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Converged,
    Oscillating,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniEstimate {
    pub value: f64,
    pub kind: DiniKind,
    /// `(h, quotient)` pairs with strictly decreasing `h`.
    pub h_ladder: Vec<(f64, f64)>,
    pub trend: Trend,
}

impl DiniEstimate {
    pub fn tail(&self) -> &[(f64, f64)] {
        &self.h_ladder[self.h_ladder.len() - TAIL..]
    }
}

/// The ladder steps `H0 * 2^(-j/4)`, `j = 1..=RUNGS`.
pub fn ladder() -> Vec<f64> {
    let rho = 2f64.powf(-1.0 / RUNGS_PER_OCTAVE as f64);
    (1..=RUNGS).map(|j| H0 * rho.powi(j as i32)).collect()
}

/// Dini derivative of `g` at `t0`. Upper kinds take the maximum of the tail
/// quotients, lower kinds the minimum.
pub fn dini<G>(g: G, t0: f64, kind: DiniKind) -> Result<DiniEstimate>
where
    G: Fn(f64) -> Result<f64>,
{
    let g0 = finite(g(t0)?, t0)?;
    let mut h_ladder = Vec::with_capacity(RUNGS);
    for h in ladder() {
        let t = if kind.is_right() { t0 + h } else { t0 - h };
        // the step actually represented in floating point
        let h_eff = (t - t0).abs();
        let gt = finite(g(t)?, t)?;
        let q = if kind.is_right() { (gt - g0) / h_eff } else { (g0 - gt) / h_eff };
        h_ladder.push((h_eff, q));
    }
    let tail: Vec<f64> = h_ladder[RUNGS - TAIL..].iter().map(|p| p.1).collect();
    let value = if kind.is_upper() {
        tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        tail.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(DiniEstimate { value, kind, h_ladder, trend: classify(&tail) })
}

fn finite(v: f64, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("non-finite function value at t = {t}")))
    }
}

fn spread(q: &[f64]) -> f64 {
    let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Converged when the tail is flat or its spread halves from the first half
/// of the tail to the second; diverging when `|q|` grows monotonically by at
/// least a factor 2; oscillating otherwise.
fn classify(tail: &[f64]) -> Trend {
    let first = tail[0].abs();
    let last = tail[tail.len() - 1].abs();
    let monotone = tail.windows(2).all(|w| w[1].abs() >= w[0].abs());
    if monotone && last >= 2.0 * first && last > 0.0 {
        return Trend::Diverging;
    }
    let scale = 1.0 + tail.iter().map(|q| q.abs()).fold(0.0, f64::max);
    let total = spread(tail);
    let (a, b) = tail.split_at(tail.len() / 2);
    if total <= 1e-6 * scale || spread(b) <= 0.5 * spread(a) {
        Trend::Converged
    } else {
        Trend::Oscillating
    }
}

/// `D+[f]phi(t0, x0)`: upper right Dini derivative of
/// `h -> phi(t0 + h, x0 + h f(t0, x0))`, with the direction frozen at `x0`.
pub fn directional_upper_dini(phi: &Expr, field: &FieldSpec, t0: f64, x0: &[f64]) -> Result<DiniEstimate> {
    let f0 = field.eval(t0, x0)?;
    directional_upper_dini_with(|t, x| Ok(phi.eval(t, x)?), &f0, t0, x0)
}

/// Frozen-direction derivative of an arbitrary function of `(t, x)` along `f0`.
pub fn directional_upper_dini_with<P>(phi: P, f0: &[f64], t0: f64, x0: &[f64]) -> Result<DiniEstimate>
where
    P: Fn(f64, &[f64]) -> Result<f64>,
{
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("field value {f0:?} at t = {t0} is not finite")));
    }
    dini(
        |t| {
            let h = t - t0;
            let x: Vec<f64> = x0.iter().zip(f0).map(|(a, b)| a + h * b).collect();
            phi(t, &x)
        },
        t0,
        DiniKind::UpperRight,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn abs(t: f64) -> Result<f64> {
        Ok(t.abs())
    }

    #[test]
    fn ladder_shape() {
        let h = ladder();
        assert_eq!(h.len(), RUNGS);
        assert!(h.windows(2).all(|w| w[1] < w[0]));
        assert!((h[RUNGS - 1] - H0 * 2f64.powi(-24)).abs() < 1e-20);
    }

    #[test]
    fn abs_one_sided_slopes() {
        let ur = dini(abs, 0.0, DiniKind::UpperRight).unwrap();
        assert!((ur.value - 1.0).abs() <= 1e-12);
        assert_eq!(ur.trend, Trend::Converged);
        let ul = dini(abs, 0.0, DiniKind::UpperLeft).unwrap();
        assert!((ul.value + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn oscillating_quotient() {
        let g = |t: f64| Ok(if t == 0.0 { 0.0 } else { t * (1.0 / t).sin() });
        let ur = dini(g, 0.0, DiniKind::UpperRight).unwrap();
        let lr = dini(g, 0.0, DiniKind::LowerRight).unwrap();
        assert!((ur.value - 1.0).abs() < 0.1, "{}", ur.value);
        assert!((lr.value + 1.0).abs() < 0.1, "{}", lr.value);
        assert_eq!(ur.trend, Trend::Oscillating);
    }

    #[test]
    fn smooth_functions_converge() {
        let e = dini(|t: f64| Ok(t.exp()), 0.0, DiniKind::LowerLeft).unwrap();
        assert!((e.value - 1.0).abs() < 1e-6);
        assert_eq!(e.trend, Trend::Converged);
    }

    #[test]
    fn blow_up_is_diverging() {
        let e = dini(|t: f64| Ok(t.abs().sqrt()), 0.0, DiniKind::UpperRight).unwrap();
        assert_eq!(e.trend, Trend::Diverging);
    }

    #[test]
    fn non_finite_values_are_errors() {
        assert!(dini(|t: f64| Ok(1.0 / t), 0.0, DiniKind::UpperRight).is_err());
    }

    #[test]
    fn directional_examples() {
        let rot = FieldSpec::new(vec![parse_expression("-x2").unwrap(), parse_expression("x1").unwrap()], 1.0, None)
            .unwrap();
        let r = parse_expression("sqrt(x1^2 + x2^2)").unwrap();
        let d = directional_upper_dini(&r, &rot, 0.0, &[1.0, 0.0]).unwrap();
        assert!(d.value.abs() < 1e-6);
        let t = parse_expression("t").unwrap();
        let d = directional_upper_dini(&t, &rot, 0.7, &[0.2, 0.1]).unwrap();
        assert!((d.value - 1.0).abs() <= 1e-12);
    }
}

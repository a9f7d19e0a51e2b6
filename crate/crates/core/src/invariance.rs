//! Forward-invariance checkers: the strict boundary test with the
//! frozen-direction derivative, and the proximal certificate
//! `phi = psi * exp(-K t)` for sampled sets.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dini::directional_upper_dini;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{norm_diff, FieldSpec};
use crate::integrate::{integrate, Trajectory};
use crate::report::{CheckReport, Sample};
use crate::sampling::sample_boundary;
use crate::sets::{ImplicitSet, SampledSet};
use crate::norm;

/// Offset beyond the covering radius at which certificate trajectories start.
pub const OUTWARD_OFFSET: f64 = 1e-3;
/// Exterior points drawn for the Lipschitz premise.
pub const PREMISE_SAMPLES: usize = 256;
/// Largest tolerated increase of the certificate along a trajectory.
pub const CERTIFICATE_TOL: f64 = 1e-4;
/// Integration step for certificate trajectories.
pub const TRAJECTORY_STEP: f64 = 1e-3;

/// Samples the boundary `|phi| <= 1e-9` at `t_samples` evenly spaced times and
/// classifies `D+[f]phi` against the margin: below `-margin` passes, above
/// `margin` fails, in between is marginal.
pub fn nagumo_check(
    set: &ImplicitSet,
    field: &FieldSpec,
    t_samples: usize,
    boundary_samples: usize,
    seed: u64,
    margin: f64,
) -> Result<CheckReport> {
    if set.dimension() != field.dimension() {
        return Err(Error::Dimension { expected: field.dimension(), got: set.dimension() });
    }
    if t_samples == 0 || boundary_samples == 0 {
        return Err(Error::invalid("sample counts must be positive"));
    }
    let (a, b) = set.window().time;
    let mut samples = Vec::with_capacity(t_samples * boundary_samples);
    for i in 0..t_samples {
        let t = a + (b - a) * i as f64 / t_samples as f64;
        for x in sample_boundary(set, t, boundary_samples, seed.wrapping_add(i as u64))? {
            let d = directional_upper_dini(set.phi_expr(), field, t, &x)?;
            samples.push(Sample::new(t, x, d.value, 0.0, margin));
        }
    }
    let mut report = CheckReport::new(samples, margin, seed);
    match report.verdict {
        crate::report::Verdict::Marginal => report.note(
            "some boundary derivatives are within the margin of zero; the strict condition is not \
             established, although the set may still be invariant (e.g. under a tangent flow)",
        ),
        crate::report::Verdict::Fail => report.note("the field points strictly outward at some boundary samples"),
        crate::report::Verdict::Pass => report.note("the field points strictly inward at every boundary sample"),
    }
    Ok(report)
}

/// `psi(t, x) = min ||x - x*|| + M |t - t*|` over the stored points.
pub fn proximal_psi(set: &SampledSet, m: f64, t: f64, x: &[f64]) -> f64 {
    set.proximal(m, t, x).0
}

/// The certificate `max(psi - r, 0) * exp(-K t)`, with `r` the covering radius.
pub fn proximal_certificate(set: &SampledSet, k: f64, t: f64, x: &[f64]) -> f64 {
    (proximal_psi(set, set.hull_m(), t, x) - set.resolution()).max(0.0) * (-k * t).exp()
}

/// Two-part check of a sampled set.
///
/// The premise `|f(t, x) - f(t, x*)| <= K |x - x*|` is tested at random
/// exterior points against their nearest stored point. The certificate is
/// then followed along trajectories started just outside the set, and must
/// not increase by more than [`CERTIFICATE_TOL`] between sample slices.
pub fn lipschitz_majorant_check(
    set: &SampledSet,
    field: &FieldSpec,
    k: Option<f64>,
    trials: usize,
    horizon: f64,
    seed: u64,
    margin: f64,
) -> Result<CheckReport> {
    if set.dimension() != field.dimension() {
        return Err(Error::Dimension { expected: field.dimension(), got: set.dimension() });
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let k = match k.or(field.lipschitz_k()) {
        Some(k) => k,
        None => field.estimate_constants(set.window(), seed)?.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slices = set.time_slices();
    let window = set.window();
    let mut samples = Vec::new();
    let mut notes = Vec::new();

    if slices.len() < 2 {
        notes.push(format!(
            "degenerate time coverage: the set is sampled at a single time t = {}; premise skipped",
            slices[0]
        ));
    } else {
        let mut drawn = 0;
        while samples.len() < PREMISE_SAMPLES && drawn < 100 * PREMISE_SAMPLES {
            drawn += 1;
            let t = slices[rng.gen_range(0..slices.len())];
            let x = window.sample_state(&mut rng);
            let (psi, idx) = set.proximal(set.hull_m(), t, &x);
            if psi <= set.resolution() {
                continue;
            }
            let xs = &set.points()[idx].1;
            let lhs = norm_diff(&field.eval(t, &x)?, &field.eval(t, xs)?);
            let raw = lhs - k * norm_diff(&x, xs);
            samples.push(Sample::new(t, x, raw, 2.0 * margin, margin));
        }
        if samples.is_empty() {
            notes.push("no exterior points found in the window; premise skipped".into());
        }
    }

    let t_start = slices[0];
    let t_end = slices
        .iter()
        .copied()
        .filter(|&t| t <= t_start + horizon)
        .fold(t_start, f64::max);
    let mut worst: Option<(f64, Vec<(f64, f64)>)> = None;
    if t_end > t_start {
        let start_pts: Vec<&Vec<f64>> = set
            .points()
            .iter()
            .filter(|p| p.0 == t_start)
            .map(|p| &p.1)
            .collect();
        for _ in 0..trials {
            let d = random_direction(&mut rng, set.dimension());
            let support = start_pts
                .iter()
                .copied()
                .max_by(|p, q| dot(p, &d).total_cmp(&dot(q, &d)))
                .expect("the start slice is nonempty");
            let x0: Vec<f64> = support
                .iter()
                .zip(&d)
                .map(|(s, di)| s + (set.resolution() + OUTWARD_OFFSET) * di)
                .collect();
            if !window.contains_state(&x0) {
                continue;
            }
            let curve = certificate_along(set, field, k, t_start, &x0, t_end)?;
            let inc = curve.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
            samples.push(Sample::new(t_start, x0, inc, CERTIFICATE_TOL, margin));
            if worst.as_ref().is_none_or(|(w, _)| inc > *w) {
                worst = Some((inc, curve));
            }
        }
    } else {
        notes.push("the set covers no time span after its first slice; certificate not followed".into());
    }

    let mut report = CheckReport::new(samples, margin, seed);
    report.notes = notes;
    report.note(format!("K = {k}, covering radius = {}", set.resolution()));
    if let Some((inc, curve)) = worst {
        let strictly = curve.windows(2).all(|w| w[1].1 > w[0].1);
        report.note(format!(
            "largest certificate increment {inc:.3e}{}",
            if strictly { "; the certificate increases strictly along the worst trajectory" } else { "" }
        ));
        report.witness = curve;
    }
    Ok(report)
}

/// Integrates slice to slice and records the certificate at every slice time.
fn certificate_along(
    set: &SampledSet,
    field: &FieldSpec,
    k: f64,
    t0: f64,
    x0: &[f64],
    t_end: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut curve = vec![(t0, proximal_certificate(set, k, t0, x0))];
    let mut x = x0.to_vec();
    let mut t = t0;
    for &next in set.time_slices().iter().filter(|&&s| s > t0 && s <= t_end) {
        let tr = integrate(field, t, &x, next, TRAJECTORY_STEP, set.window())?;
        if tr.final_time() < next {
            break;
        }
        x = tr.final_state().to_vec();
        t = next;
        curve.push((t, proximal_certificate(set, k, t, &x)));
    }
    Ok(curve)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn random_direction<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|c| c / n).collect();
        }
    }
}

/// Whether `phi` never increases by more than `tol` between successive
/// samples, together with the largest increment observed.
pub fn monotone_along(trajectory: &Trajectory, phi: &Expr, tol: f64) -> Result<(bool, f64)> {
    let values: Vec<f64> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(t, x)| phi.eval(*t, x))
        .collect::<std::result::Result<_, _>>()?;
    let worst = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok((worst <= tol, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::field::Window;
    use crate::report::Verdict;

    fn field(src: &[&str]) -> FieldSpec {
        FieldSpec::new(src.iter().map(|s| parse_expression(s).unwrap()).collect(), 2.0, Some(1.0)).unwrap()
    }

    fn disk() -> ImplicitSet {
        let w = Window::cube((0.0, 2.0), 2, 2.0).unwrap();
        ImplicitSet::new(parse_expression("x1^2 + x2^2 - 1").unwrap(), 4.0, w).unwrap()
    }

    #[test]
    fn nagumo_verdicts_on_the_disk() {
        let run = |f: &[&str]| nagumo_check(&disk(), &field(f), 4, 16, 11, 1e-5).unwrap();
        let inward = run(&["-x1", "-x2"]);
        assert_eq!(inward.verdict, Verdict::Pass);
        assert!(inward.samples.iter().all(|s| (s.raw + 2.0).abs() < 1e-6));
        assert_eq!(run(&["-x2", "x1"]).verdict, Verdict::Marginal);
        assert_eq!(run(&["x1", "x2"]).verdict, Verdict::Fail);
    }

    #[test]
    fn psi_examples() {
        let w = Window::cube((0.0, 2.0), 2, 3.0).unwrap();
        let circle: Vec<(f64, Vec<f64>)> = (0..64)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 64.0;
                (0.0, vec![a.cos(), a.sin()])
            })
            .collect();
        let set = SampledSet::new(circle.clone(), 1.0, w.clone()).unwrap();
        assert!((proximal_psi(&set, 1.0, 0.0, &[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(proximal_psi(&set, 1.0, 0.0, &circle[5].1), 0.0);
        let single = SampledSet::new(vec![(1.0, vec![0.0, 0.0])], 2.0, w).unwrap();
        assert_eq!(proximal_psi(&single, 2.0, 0.0, &[1.0, 0.0]), 3.0);
    }

    #[test]
    fn monotone_examples() {
        let w = Window::cube((0.0, 1.0), 2, 2.0).unwrap();
        let tr = integrate(&field(&["-x1", "-x2"]), 0.0, &[1.0, 0.0], 1.0, 1e-3, &w).unwrap();
        let (ok, inc) = monotone_along(&tr, &parse_expression("x1^2 + x2^2").unwrap(), 1e-9).unwrap();
        assert!(ok && inc <= 1e-9);
        let (ok, inc) = monotone_along(&tr, &parse_expression("t").unwrap(), 1e-9).unwrap();
        assert!(!ok && (inc - 1e-3).abs() < 1e-12);
        assert_eq!(monotone_along(&tr, &parse_expression("3").unwrap(), 1e-9).unwrap(), (true, 0.0));
    }

    #[test]
    fn single_slice_is_degenerate() {
        let w = Window::cube((0.0, 1.0), 2, 2.0).unwrap();
        let set = SampledSet::new(vec![(0.0, vec![0.0, 0.0]), (0.0, vec![0.5, 0.0])], 1.0, w).unwrap();
        let r = lipschitz_majorant_check(&set, &field(&["-x1", "-x2"]), Some(1.0), 3, 1.0, 0, 1e-5).unwrap();
        assert!(r.notes.iter().any(|n| n.contains("degenerate")));
    }
}

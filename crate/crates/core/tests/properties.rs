//! Property tests for the invariants every module promises.

use std::sync::OnceLock;

use nagumo_core::comparison::{check_theorem7, check_theorem8, ComparisonProblem, Mode, SFunction};
use nagumo_core::dini::{dini, directional_upper_dini, directional_upper_dini_with, DiniKind};
use nagumo_core::expr::{BinOp, Func};
use nagumo_core::invariance::{nagumo_check, proximal_psi};
use nagumo_core::okamura::{build_grid, okamura_distance, refine, OkamuraGrid, ScalarTubeIntegral};
use nagumo_core::{
    integrate, parse_expression, sample_boundary, Error, Expr, FieldSpec, ImplicitSet, SampledSet, Tube, Verdict, Window,
};
use proptest::prelude::*;

/// Rounding floor of a ladder quotient for a function of size `g`: an
/// evaluation error of a few ulps divided by the smallest rung.
fn ladder_floor(g: f64) -> f64 {
    let h_min = *nagumo_core::dini::ladder().last().unwrap();
    4.0 * f64::EPSILON * (1.0 + g.abs()) / h_min
}

fn e(src: &str) -> Expr {
    parse_expression(src).unwrap()
}

fn field(src: &[&str], m: f64) -> FieldSpec {
    FieldSpec::new(src.iter().map(|s| e(s)).collect(), m, None).unwrap()
}

const CORPUS: &[&str] = &[
    "1",
    "2.5",
    "t",
    "s",
    "x1",
    "-x2",
    "x1 + x2 - 3",
    "x1 - (x2 - x3)",
    "x1 * x2 / t",
    "x1 / (x2 * t)",
    "2^3^2",
    "(2^3)^2",
    "-x1^2",
    "(-x1)^2",
    "sin(t) * cos(x1)",
    "exp(-t) + log(1 + x1^2)",
    "sqrt(x1^2 + x2^2) - 1",
    "abs(x1 - 0.5)",
    "min(x1, x2, 3)",
    "max(x1, -x2) * 2",
    "-(x1 + x2)",
    "x1*x1 + x2*x2 - 1",
    "1e-3 * t",
    "-(-x1)",
];

#[test]
fn print_then_parse_is_identity_on_corpus() {
    for src in CORPUS {
        let a = e(src);
        let b = parse_expression(&a.to_string()).unwrap_or_else(|err| panic!("{src} -> {a}: {err}"));
        assert_eq!(a, b, "{src} printed as {a}");
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| Expr::num(n as f64 / 8.0)),
        Just(Expr::time()),
        (0usize..3).prop_map(Expr::state),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (prop_oneof![Just(Func::Sin), Just(Func::Exp), Just(Func::Abs)], inner.clone())
                .prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (prop_oneof![Just(Func::Min), Just(Func::Max)], prop::collection::vec(inner, 2..4))
                .prop_map(|(f, args)| Expr::Call(f, args)),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity_on_trees(a in arb_expr()) {
        let printed = a.to_string();
        prop_assert_eq!(parse_expression(&printed).unwrap(), a, "{}", printed);
    }
}

#[test]
fn rk4_error_ratio_is_fourth_order() {
    let w = Window::cube((0.0, 2.0), 1, 5.0).unwrap();
    let f = field(&["-x1"], 5.0);
    let err = |h: f64| (integrate(&f, 0.0, &[1.0], 1.0, h, &w).unwrap().final_state()[0] - (-1.0f64).exp()).abs();
    let ratio = err(0.1) / err(0.05);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rotation_conserves_radius() {
    let w = Window::cube((0.0, 7.0), 2, 2.0).unwrap();
    let tr = integrate(&field(&["-x2", "x1"], 2.0), 0.0, &[0.6, 0.8], 2.0 * std::f64::consts::PI, 1e-3, &w).unwrap();
    assert!(tr.states.iter().all(|x| (x[0].hypot(x[1]) - 1.0).abs() <= 1e-6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn boundary_samples_stay_in_band(r in 0.3f64..1.5, cx in -0.4f64..0.4, seed in 0u64..1000) {
        let phi = e(&format!("(x1 - ({cx}))^2 + x2^2 - {}", r * r));
        let set = ImplicitSet::new(phi, 8.0, Window::cube((0.0, 1.0), 2, 2.0).unwrap()).unwrap();
        for p in sample_boundary(&set, 0.5, 8, seed).unwrap() {
            prop_assert!(set.phi(0.5, &p).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn smooth_dini_matches_derivative(a in -2.0f64..2.0, b in -2.0f64..2.0, t0 in -1.0f64..1.0) {
        let g = |t: f64| Ok(a * t * t + b * (t).sin() + (0.5 * t).exp());
        let exact = 2.0 * a * t0 + b * t0.cos() + 0.5 * (0.5 * t0).exp();
        for kind in [DiniKind::UpperRight, DiniKind::LowerRight, DiniKind::UpperLeft, DiniKind::LowerLeft] {
            let v = dini(g, t0, kind).unwrap().value;
            let tol = 1e-6 + ladder_floor(g(t0).unwrap());
            prop_assert!((v - exact).abs() <= tol, "{:?}: {} vs {}", kind, v, exact);
        }
    }

    #[test]
    fn lower_dini_never_exceeds_upper(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.0f64..1.0) {
        let g = |t: f64| Ok(a * t.abs() + b * t + c * if t == 0.0 { 0.0 } else { t * (1.0 / t).sin() });
        let v = |k| dini(g, 0.0, k).unwrap().value;
        prop_assert!(v(DiniKind::LowerRight) <= v(DiniKind::UpperRight));
        prop_assert!(v(DiniKind::LowerLeft) <= v(DiniKind::UpperLeft));
    }

    #[test]
    fn directional_dini_is_subadditive(t in 0.0f64..1.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
        let f = field(&["-x2 + sin(t)", "x1 - x2"], 4.0);
        let p1 = e("x1^2 + 0.5");
        let p2 = e("abs(x2) + x1^2");
        let sum = Expr::binary(BinOp::Add, p1.clone(), p2.clone());
        let prod = Expr::binary(BinOp::Mul, p1.clone(), p2.clone());
        let x = [x1, x2];
        let d = |p: &Expr| directional_upper_dini(p, &f, t, &x).unwrap().value;
        let (d1, d2) = (d(&p1), d(&p2));
        prop_assert!(d(&sum) <= d1 + d2 + 1e-6);
        let (v1, v2) = (p1.eval(t, &x).unwrap(), p2.eval(t, &x).unwrap());
        prop_assert!(d(&prod) <= v1 * d2 + v2 * d1 + 1e-6);
    }

    #[test]
    fn directional_dini_scales_with_phi(k in -3i32..=3, c in 0.1f64..10.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
        let f0 = [x2 - x1, -x1];
        let x = [x1, x2];
        let phi = |s: f64, y: &[f64]| -> nagumo_core::Result<f64> { Ok(y[0] * y[0] + 3.0 * y[1] + s) };
        let value = |c: f64| directional_upper_dini_with(|s, y| Ok(c * phi(s, y)?), &f0, 0.0, &x).unwrap().value;
        let base = value(1.0);
        // powers of two scale every quotient without rounding
        let p = 2f64.powi(k);
        prop_assert!((value(p) - p * base).abs() <= 1e-9, "{} vs {}", value(p), p * base);
        let tol = 1e-9 + ladder_floor(c * phi(0.0, &x).unwrap());
        prop_assert!((value(c) - c * base).abs() <= tol, "{} vs {}", value(c), c * base);
    }
}

fn disk_scaled(c: f64, r: f64) -> ImplicitSet {
    let phi = e(&format!("{c} * (x1^2 + x2^2 - {})", r * r));
    ImplicitSet::new(phi, 2.0 * c * 2.0, Window::cube((0.0, 1.0), 2, 2.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nagumo_verdict_ignores_positive_scaling(r in 0.4f64..1.5, which in 0usize..3, seed in 0u64..100) {
        let f = [field(&["-x1", "-x2"], 3.0), field(&["-x2", "x1"], 3.0), field(&["x1", "x2"], 3.0)][which].clone();
        let base = nagumo_check(&disk_scaled(1.0, r), &f, 3, 6, seed, 1e-5).unwrap().verdict;
        for c in [0.1, 10.0] {
            prop_assert_eq!(nagumo_check(&disk_scaled(c, r), &f, 3, 6, seed, 1e-5).unwrap().verdict, base);
        }
    }
}

fn ring() -> SampledSet {
    let pts = (0..720)
        .map(|i| {
            let a = (i as f64 * 0.5).to_radians();
            ((i % 3) as f64 * 0.5, vec![a.cos(), a.sin()])
        })
        .collect();
    SampledSet::new(pts, 2.0, Window::cube((0.0, 1.0), 2, 3.0).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn proximal_psi_is_one_lipschitz(
        t in 0.0f64..1.0,
        a in prop::array::uniform2(-2.5f64..2.5),
        b in prop::array::uniform2(-2.5f64..2.5),
    ) {
        let set = ring();
        let gap = (proximal_psi(&set, 2.0, t, &a) - proximal_psi(&set, 2.0, t, &b)).abs();
        prop_assert!(gap <= (a[0] - b[0]).hypot(a[1] - b[1]) + 1e-12);
    }

    #[test]
    fn proximal_psi_vanishes_exactly_on_the_set(i in 0usize..720) {
        let set = ring();
        let (t, x) = set.points()[i].clone();
        prop_assert_eq!(proximal_psi(&set, 2.0, t, &x), 0.0);
        let out = [1.3 * x[0], 1.3 * x[1]];
        prop_assert!(proximal_psi(&set, 2.0, t, &out) > 0.0);
    }

    #[test]
    fn max_functional_has_kamke_property(
        a in prop::array::uniform3(-1.0f64..1.0),
        slopes in prop::array::uniform3(-2.0f64..2.0),
        ties in 0usize..3,
    ) {
        let mut a = a;
        for i in 1..=ties {
            a[i] = a[0];
        }
        let s = SFunction::Max;
        let g = |t: f64| s.eval(t, &[a[0] + slopes[0] * t, a[1] + slopes[1] * t, a[2] + slopes[2] * t]);
        let lhs = dini(g, 0.0, DiniKind::UpperRight).unwrap().value;
        let rhs = s.eval(0.0, &slopes).unwrap();
        prop_assert!(lhs <= rhs + 1e-6, "{} > {}", lhs, rhs);
    }
}

fn linear_problem(a: [f64; 4], lambda: f64, c: f64, s: SFunction, mode: Mode) -> ComparisonProblem {
    let comps = [format!("{} * ({} * x1 + {} * x2)", c, a[0], a[1]), format!("{} * ({} * x1 + {} * x2)", c, a[2], a[3])];
    let f = FieldSpec::new(comps.iter().map(|s| e(s)).collect(), 40.0, None).unwrap();
    let w = Window::cube((0.0, 1.0), 2, 3.0).unwrap();
    let big_f = e(&format!("{} * s", c * lambda));
    let omega = e(&format!("exp({} * t)", c * lambda));
    ComparisonProblem::new(f, s, big_f, omega, (0.0, 0.5), w, mode).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn pointwise_pass_implies_directional_pass(
        a in prop::array::uniform4(-1.0f64..1.0),
        lambda in 0.5f64..3.0,
        seed in 0u64..1000,
    ) {
        let thm8 = check_theorem8(&linear_problem(a, lambda, 1.0, SFunction::Norm, Mode::Pointwise), 64, seed, 1e-5)
            .unwrap();
        if thm8.verdict != Verdict::Fail {
            let lifted = SFunction::Expr { expr: e("sqrt(x1^2 + x2^2)"), kamke: true };
            let thm7 = check_theorem7(&linear_problem(a, lambda, 1.0, lifted, Mode::Directional), 64, seed, 1e-5)
                .unwrap();
            prop_assert_ne!(thm7.verdict, Verdict::Fail);
        }
    }

    #[test]
    fn comparison_statistics_scale_with_the_system(
        a in prop::array::uniform4(-1.0f64..1.0),
        lambda in 0.5f64..2.0,
        seed in 0u64..1000,
    ) {
        let base = check_theorem8(&linear_problem(a, lambda, 1.0, SFunction::Norm, Mode::Pointwise), 32, seed, 1e-5);
        for c in [0.5, 2.0] {
            let scaled = check_theorem8(&linear_problem(a, lambda, c, SFunction::Norm, Mode::Pointwise), 32, seed, 1e-5);
            let (base, scaled) = match (&base, scaled) {
                (Ok(b), Ok(s)) => (b, s),
                (Err(Error::PremiseFailed(_)), Err(Error::PremiseFailed(_))) => continue,
                (b, s) => return Err(TestCaseError::fail(format!("{b:?} vs {s:?}"))),
            };
            for (x, y) in base.samples.iter().zip(&scaled.samples) {
                prop_assert!((y.raw - c * x.raw).abs() <= 1e-9 * (1.0 + x.raw.abs()));
                if x.raw.abs() > 1e-3 {
                    prop_assert_eq!(x.raw > 0.0, y.raw > 0.0);
                }
            }
        }
    }
}

fn decay_grid() -> &'static OkamuraGrid {
    static GRID: OnceLock<OkamuraGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let w = Window::new((0.0, 1.0), vec![-3.0], vec![3.0]).unwrap();
        build_grid(&field(&["-x1 + 0.5 * sin(3 * t)"], 4.0), &w, 32, 64).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn okamura_is_nonnegative_and_sums_its_chain(
        tp in 0.0f64..0.5, tq in 0.5f64..1.0, xp in -2.0f64..2.0, xq in -2.0f64..2.0,
    ) {
        let v = okamura_distance(decay_grid(), (tp, &[xp]), (tq, &[xq])).unwrap();
        prop_assert!(v.value >= 0.0);
        let jumps: f64 = v.chain.iter().map(|j| j.length()).sum();
        prop_assert!((v.value - v.source_cost - jumps).abs() <= 1e-9);
    }

    #[test]
    fn okamura_equal_time_is_the_norm(t in 0.0f64..1.0, xp in -2.0f64..2.0, xq in -2.0f64..2.0) {
        let g = decay_grid();
        let v = okamura_distance(g, (t, &[xp]), (t, &[xq])).unwrap().value;
        prop_assert!((v - (xp - xq).abs()).abs() <= 2.0 * g.spacing().1);
    }

    #[test]
    fn okamura_is_a_lower_integral(tp in 0.0f64..0.3, xp in -1.5f64..1.5, x0 in -1.5f64..1.5) {
        let g = decay_grid();
        let dx = g.spacing().1;
        let sol = g.solve(&[(tp, vec![xp], 0.0)]).unwrap();
        let tr = integrate(g.field(), tp, &[x0], 1.0, 1e-2, g.window()).unwrap();
        let mut prev = f64::INFINITY;
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let v = sol.query(g, *t, x).unwrap().value;
            prop_assert!(v <= prev + 3.0 * dx, "rose from {} to {} at t = {}", prev, v, t);
            prev = prev.min(v);
        }
    }

    #[test]
    fn okamura_refinement_does_not_raise(tp in 0.0f64..0.5, tq in 0.5f64..1.0, xp in -2.0f64..2.0, xq in -2.0f64..2.0) {
        let g = decay_grid();
        let fine = fine_grid();
        let coarse = okamura_distance(g, (tp, &[xp]), (tq, &[xq])).unwrap().value;
        let refined = okamura_distance(fine, (tp, &[xp]), (tq, &[xq])).unwrap().value;
        prop_assert!(refined <= coarse + 2.0 * g.spacing().1, "{} -> {}", coarse, refined);
    }

    #[test]
    fn scalar_tube_integral_is_monotone_above_omega(t in 0.0f64..1.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let g = scalar_grid();
        let omega = e("exp(-t) - 1");
        let tube = ScalarTubeIntegral::new(g, &omega, 4.0).unwrap();
        let w = omega.eval(t, &[]).unwrap();
        let (lo, hi) = (w + 2.0 * u.min(v), w + 2.0 * u.max(v));
        let (a, b) = (tube.value(g, t, lo).unwrap(), tube.value(g, t, hi).unwrap());
        prop_assert!(b >= a - 2.0 * g.spacing().1, "{} at {} vs {} at {}", a, lo, b, hi);
    }
}

fn fine_grid() -> &'static OkamuraGrid {
    static GRID: OnceLock<OkamuraGrid> = OnceLock::new();
    GRID.get_or_init(|| refine(decay_grid()).unwrap())
}

fn scalar_grid() -> &'static OkamuraGrid {
    static GRID: OnceLock<OkamuraGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let w = Window::new((0.0, 1.0), vec![-3.0], vec![3.0]).unwrap();
        build_grid(&field(&["-x1 - 1"], 4.0), &w, 32, 64).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn polygon_vertices_satisfy_the_step_condition(r in 0.1f64..0.95, angle in 0.0f64..std::f64::consts::TAU, n in 20usize..200) {
        use nagumo_core::polygon::{build_polygon, satisfies_step_condition};
        let set = ImplicitSet::new(e("x1^2 + x2^2 - 1"), 4.0, Window::cube((0.0, 2.0), 2, 1.5).unwrap()).unwrap();
        let f = field(&["-x1 - x2", "x1 - x2"], 3.0);
        let run = build_polygon(&set, &f, 0.0, &[r * angle.cos(), r * angle.sin()], n, 1.0).unwrap();
        prop_assert!(run.stalled.is_none());
        prop_assert!(run.lipschitz_cert <= f.bound_m() + 1.0 + 1e-6);
        for w in run.vertices.windows(2) {
            let ((t0, x0), (t1, x1)) = (&w[0], &w[1]);
            prop_assert!(*t0 < *t1 && *t1 < t0 + run.epsilon);
            let f0 = f.eval(*t0, x0).unwrap();
            prop_assert!(satisfies_step_condition(&f0, *t0, x0, *t1, x1, run.epsilon));
        }
    }

    #[test]
    fn unclipped_perron_run_is_the_reference_solution(x0 in -0.9f64..0.9, a in 0.1f64..1.0) {
        use nagumo_core::polygon::perron_tube_solve;
        let f = field(&[&format!("-{a} * x1")], 3.0);
        let tube = Tube::new(e("-1"), e("1"), (0.0, 1.0)).unwrap();
        let run = perron_tube_solve(&f, &tube, x0, 1e-3).unwrap();
        prop_assert_eq!(run.max_clip, 0.0);
        let w = Window::new((0.0, 1.0), vec![-1.0], vec![1.0]).unwrap();
        let reference = integrate(&f, 0.0, &[x0], 1.0, 1e-3, &w).unwrap();
        for (x, y) in run.trajectory.states.iter().zip(&reference.states) {
            prop_assert!((x[0] - y[0]).abs() <= 1e-9);
        }
    }

    #[test]
    fn passing_nagumo_keeps_trajectories_inside(r in 0.5f64..1.2, b in 0.0f64..2.0, seed in 0u64..100) {
        let set = ImplicitSet::new(
            e(&format!("x1^2 + x2^2 - {}", r * r)),
            4.0,
            Window::cube((0.0, 1.0), 2, 2.0).unwrap(),
        )
        .unwrap();
        let f = field(&[&format!("-x1 - {b} * x2"), &format!("{b} * x1 - x2")], 6.0);
        let report = nagumo_check(&set, &f, 4, 8, seed, 1e-5).unwrap();
        prop_assert_eq!(report.verdict, Verdict::Pass);
        for p in sample_boundary(&set, 0.0, 50, seed).unwrap() {
            let tr = integrate(&f, 0.0, &p, 1.0, 1e-3, set.window()).unwrap();
            for (t, x) in tr.times.iter().zip(&tr.states) {
                prop_assert!(set.phi(*t, x).unwrap() <= 1e-6 + 1e-6);
            }
        }
    }
}

//! Executes resolved checks and assembles the scenario report.

use nagumo_core::comparison::{check_theorem4, check_theorem7, check_theorem8, Mode};
use nagumo_core::invariance::{lipschitz_majorant_check, nagumo_check};
use nagumo_core::okamura::{build_grid, family_min_is_lower_integral, Certificate, OkamuraStar};
use nagumo_core::polygon::{perron_tube_solve, polygon_limit};
use nagumo_core::{integrate, CheckReport, Error, SampledSet, Sample, Verdict};
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{Check, CheckKind, CheckParams, Direction, Scenario};
use crate::svg::{self, Series};

/// Clip magnitude below which a tube run counts as unclipped.
pub const CLIP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub label: String,
    pub kind: CheckKind,
    pub expected: Option<Verdict>,
    pub matched: bool,
    #[serde(flatten)]
    pub report: CheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub unix_time: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub tool: Tool,
    pub seed: u64,
    pub direction: Direction,
    pub all_matched: bool,
    pub checks: Vec<CheckEntry>,
    /// Wall-clock data; omitted in comparison mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

/// One executed check together with its rendered artifacts.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub entry: CheckEntry,
    pub csv: Vec<u8>,
    pub svg: String,
}

pub fn tool() -> Tool {
    Tool { name: "nagumo", version: env!("CARGO_PKG_VERSION") }
}

/// Runs every check, concurrently when `parallel`; outcomes keep scenario order.
pub fn run_checks(scenario: &Scenario, parallel: bool) -> Result<Vec<CheckOutcome>, CliError> {
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> =
                scenario.checks.iter().map(|c| scope.spawn(move || run_check(scenario, c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    } else {
        scenario.checks.iter().map(|c| run_check(scenario, c)).collect()
    }
}

pub fn assemble(scenario: &Scenario, outcomes: &[CheckOutcome], run: Option<RunInfo>) -> ScenarioReport {
    ScenarioReport {
        scenario: scenario.name.clone(),
        tool: tool(),
        seed: scenario.seed,
        direction: scenario.direction,
        all_matched: outcomes.iter().all(|o| o.entry.matched),
        checks: outcomes.iter().map(|o| o.entry.clone()).collect(),
        run,
    }
}

/// Outcomes the checkers report as errors but which are evidence, not faults.
fn evidence(e: &Error) -> bool {
    matches!(
        e,
        Error::Stalled { .. }
            | Error::PremiseFailed(_)
            | Error::SurfaceNotFound
            | Error::Unreachable(_)
            | Error::InvalidStart { .. }
            | Error::NotFound(_)
    )
}

fn failed(seed: u64, margin: f64, e: &Error) -> CheckReport {
    let mut r = CheckReport::new(Vec::new(), margin, seed);
    r.verdict = Verdict::Fail;
    r.note(format!("check could not complete: {e}"));
    r
}

pub fn run_check(scenario: &Scenario, check: &Check) -> Result<CheckOutcome, CliError> {
    let wrap = |source: Error| CliError::Check { check: check.label.clone(), source };
    let field = &scenario.field;
    let window = &scenario.window;
    let seed = check.seed;
    let k = field.dimension();
    let (t_start, t_end) = window.time;

    let recover = |res: nagumo_core::Result<CheckReport>, margin: f64| match res {
        Ok(r) => Ok(r),
        Err(e) if evidence(&e) => Ok(failed(seed, margin, &e)),
        Err(e) => Err(wrap(e)),
    };

    let (csv, svg, report) = match &check.params {
        CheckParams::Nagumo { set, params } => {
            let r = recover(
                nagumo_check(set, field, params.t_samples, params.boundary_samples, seed, params.margin),
                params.margin,
            )?;
            let plot = sample_plot(&r, k, "boundary samples");
            (samples_csv(&r.samples, k), plot, r)
        }
        CheckParams::Lipschitz { set, params } => {
            let slices = params.slices.max(1);
            let horizon = params.horizon.unwrap_or(t_end - t_start);
            let times: Vec<f64> = (0..slices)
                .map(|i| if slices == 1 { t_start } else { t_start + horizon * i as f64 / (slices - 1) as f64 })
                .collect();
            let hull = params.hull_m.unwrap_or(field.bound_m());
            let r = SampledSet::from_implicit(set, &times, params.spacing, hull).and_then(|sampled| {
                lipschitz_majorant_check(&sampled, field, params.k, params.trials, horizon, seed, params.margin)
            });
            let r = recover(r, params.margin)?;
            let plot = witness_plot(&r, "certificate along the worst trajectory", "psi e^{-Kt}");
            (samples_csv(&r.samples, k), plot, r)
        }
        CheckParams::Okamura { points, certificates, params } => {
            let grid = build_grid(field, window, params.nt, params.nx).map_err(wrap)?;
            let mut family = Vec::new();
            for p in points {
                family.push(Certificate::OkamuraStar(OkamuraStar::new(&grid, p.clone(), field.bound_m()).map_err(wrap)?));
            }
            family.extend(certificates.iter().cloned().map(Certificate::Expr));
            let trajectories = params
                .starts
                .iter()
                .map(|x0| integrate(field, t_start, x0, t_end, params.step, window))
                .collect::<nagumo_core::Result<Vec<_>>>()
                .map_err(wrap)?;
            let r = recover(family_min_is_lower_integral(&grid, &family, &trajectories, params.margin), params.margin)?;
            let csv = match points.first() {
                Some((t, x)) => {
                    let mut buf = Vec::new();
                    grid.solve(&[(*t, x.clone(), 0.0)]).and_then(|s| s.write_csv(&mut buf)).map_err(wrap)?;
                    buf
                }
                None => samples_csv(&r.samples, k),
            };
            (csv, witness_plot(&r, "family minimum along the worst trajectory", "min phi"), r)
        }
        CheckParams::Comparison { problem, samples, margin } => {
            let res = match problem.mode {
                Mode::Surface => check_theorem4(problem, *samples, seed, *margin),
                Mode::Directional => check_theorem7(problem, *samples, seed, *margin),
                Mode::Pointwise => check_theorem8(problem, *samples, seed, *margin),
            };
            let r = recover(res, *margin)?;
            let plot = if r.witness.is_empty() {
                statistic_plot(&r, "sample statistics")
            } else {
                witness_plot(&r, "S along the worst follow-up trajectory", "S - omega")
            };
            (samples_csv(&r.samples, k), plot, r)
        }
        CheckParams::Perron { tube, params } => {
            let run = perron_tube_solve(field, tube, params.x0, params.step).map_err(wrap)?;
            let mut samples: Vec<Sample> = run
                .premise_violations
                .iter()
                .map(|v| Sample::new(v.t, vec![], v.field - v.dini, 0.0, 0.0))
                .collect();
            samples.push(Sample::new(t_start, vec![params.x0], run.max_clip, CLIP_TOL, 0.0));
            let mut r = CheckReport::new(samples, 0.0, seed);
            r.note(format!(
                "{} premise samples, {} violations, max clip {:.3e}",
                run.premise_samples,
                run.premise_violations.len(),
                run.max_clip
            ));
            let mut wtr = csv::Writer::from_writer(Vec::new());
            let _ = wtr.write_record(["t", "x", "lower", "upper"]);
            let mut path = Vec::new();
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            for (t, x) in run.trajectory.times.iter().zip(&run.trajectory.states) {
                let (lo, hi) = tube.bounds(*t).map_err(wrap)?;
                let _ = wtr.write_record([t.to_string(), x[0].to_string(), lo.to_string(), hi.to_string()]);
                path.push((*t, x[0]));
                lower.push((*t, lo));
                upper.push((*t, hi));
            }
            r.witness = path.clone();
            let plot = svg::render(
                "trajectory in the tube",
                "t",
                "x",
                &[
                    Series::line("omega1", "steelblue", lower),
                    Series::line("omega2", "steelblue", upper),
                    Series::line("x(t)", "black", path),
                ],
            );
            (wtr.into_inner().unwrap_or_default(), plot, r)
        }
        CheckParams::Polygon { set, params } => {
            let t0 = params.t0.unwrap_or(t_start);
            let horizon = params.horizon.unwrap_or(t_end - t0);
            match polygon_limit(set, field, t0, &params.x0, &params.schedule, horizon) {
                Ok(lim) => {
                    let samples = lim
                        .sup_distances
                        .windows(2)
                        .map(|w| Sample::new(t0, params.x0.clone(), w[1] - w[0], 0.0, 0.0))
                        .collect();
                    let mut r = CheckReport::new(samples, 0.0, seed);
                    if lim.sup_distances.len() < 2 {
                        r.verdict = Verdict::Pass;
                    }
                    r.note(format!("sup-distances between consecutive runs: {:?}", lim.sup_distances));
                    let cert = lim.runs.iter().map(|run| run.lipschitz_cert).fold(0.0, f64::max);
                    r.note(format!("largest Lipschitz certificate {cert:.6} against M + 1 = {}", field.bound_m() + 1.0));
                    let mut wtr = csv::Writer::from_writer(Vec::new());
                    let mut header = vec!["n".to_string(), "t".to_string()];
                    header.extend((1..=k).map(|i| format!("x{i}")));
                    let _ = wtr.write_record(&header);
                    let palette = ["#bbbbbb", "#888888", "#555555", "black"];
                    let mut series = Vec::new();
                    for (j, (n, run)) in lim.schedule.iter().zip(&lim.runs).enumerate() {
                        for (t, x) in &run.vertices {
                            let mut row = vec![n.to_string(), t.to_string()];
                            row.extend(x.iter().map(|v| v.to_string()));
                            let _ = wtr.write_record(&row);
                        }
                        let pts = run
                            .vertices
                            .iter()
                            .map(|(t, x)| if k >= 2 { (x[0], x[1]) } else { (*t, x[0]) })
                            .collect();
                        let color = palette[palette.len().saturating_sub(lim.runs.len()) + j.min(palette.len() - 1)];
                        series.push(Series::line(format!("N = {n}"), color, pts));
                    }
                    let (xl, yl) = if k >= 2 { ("x1", "x2") } else { ("t", "x") };
                    (wtr.into_inner().unwrap_or_default(), svg::render("Euler polygons", xl, yl, &series), r)
                }
                Err(e) if evidence(&e) => {
                    let r = failed(seed, 0.0, &e);
                    (samples_csv(&r.samples, k), statistic_plot(&r, "no polygon"), r)
                }
                Err(e) => return Err(wrap(e)),
            }
        }
    };
    let matched = check.expect.is_none_or(|v| v == report.verdict);
    Ok(CheckOutcome {
        entry: CheckEntry { label: check.label.clone(), kind: check.kind, expected: check.expect, matched, report },
        csv,
        svg,
    })
}

fn samples_csv(samples: &[Sample], k: usize) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("x{i}")));
    header.extend(["raw", "statistic", "classification"].map(String::from));
    let _ = wtr.write_record(&header);
    for s in samples {
        let mut row = vec![s.t.to_string()];
        row.extend((0..k).map(|i| s.x.get(i).map_or(String::new(), |v| v.to_string())));
        row.extend([s.raw.to_string(), s.statistic.to_string(), s.classification.to_string()]);
        let _ = wtr.write_record(&row);
    }
    wtr.into_inner().unwrap_or_default()
}

fn color(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "seagreen",
        Verdict::Marginal => "darkorange",
        Verdict::Fail => "crimson",
    }
}

fn sample_plot(r: &CheckReport, k: usize, title: &str) -> String {
    if k != 2 {
        return statistic_plot(r, title);
    }
    let series: Vec<Series> = [Verdict::Pass, Verdict::Marginal, Verdict::Fail]
        .into_iter()
        .map(|v| {
            let pts = r.samples.iter().filter(|s| s.classification == v).map(|s| (s.x[0], s.x[1])).collect();
            Series::scatter(v.as_str(), color(v), pts)
        })
        .collect();
    svg::render(title, "x1", "x2", &series)
}

fn statistic_plot(r: &CheckReport, title: &str) -> String {
    let series: Vec<Series> = [Verdict::Pass, Verdict::Marginal, Verdict::Fail]
        .into_iter()
        .map(|v| {
            let pts = r.samples.iter().filter(|s| s.classification == v).map(|s| (s.t, s.statistic)).collect();
            Series::scatter(v.as_str(), color(v), pts)
        })
        .collect();
    svg::render(title, "t", "statistic", &series)
}

fn witness_plot(r: &CheckReport, title: &str, y_label: &str) -> String {
    if r.witness.is_empty() {
        return statistic_plot(r, title);
    }
    svg::render(title, "t", y_label, &[Series::line(y_label, color(r.verdict), r.witness.clone())])
}

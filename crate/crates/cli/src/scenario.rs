//! Scenario files: TOML documents naming a window, a field, sets, tubes and
//! an ordered list of checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nagumo_core::comparison::{ComparisonProblem, Mode, SFunction};
use nagumo_core::{parse_expression, Expr, FieldSpec, ImplicitSet, Tube, Verdict, Window, DEFAULT_MARGIN};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Right,
    /// Studied through `t -> -t`, `f -> -f`.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Nagumo,
    LipschitzMajorant,
    Okamura,
    Thm4,
    Thm7,
    Thm8,
    PerronTube,
    Polygon,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::Nagumo,
        CheckKind::LipschitzMajorant,
        CheckKind::Okamura,
        CheckKind::Thm4,
        CheckKind::Thm7,
        CheckKind::Thm8,
        CheckKind::PerronTube,
        CheckKind::Polygon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Nagumo => "nagumo",
            CheckKind::LipschitzMajorant => "lipschitz-majorant",
            CheckKind::Okamura => "okamura",
            CheckKind::Thm4 => "thm4",
            CheckKind::Thm7 => "thm7",
            CheckKind::Thm8 => "thm8",
            CheckKind::PerronTube => "perron-tube",
            CheckKind::Polygon => "polygon",
        }
    }

    /// Parameters and their defaults, as shown by `list`.
    pub fn parameters(self) -> &'static str {
        match self {
            CheckKind::Nagumo => "set; t_samples = 8; boundary_samples = 16; margin = 1e-5",
            CheckKind::LipschitzMajorant => {
                "set; spacing = 0.05; slices = 11; hull_m = field M; k = field K; trials = 20; horizon = window; margin = 1e-5"
            }
            CheckKind::Okamura => "points; certificates = []; starts; nt = 64; nx = 128; step = 0.01; margin = 1e-5",
            CheckKind::Thm4 => "s = norm; kamke = false; omega; interval = window; samples = 32; margin = 1e-5",
            CheckKind::Thm7 | CheckKind::Thm8 => {
                "s = norm; kamke = false; f; omega; interval = window; samples = 256; margin = 1e-5"
            }
            CheckKind::PerronTube => "tube; x0; step = 1e-3",
            CheckKind::Polygon => "set; x0; t0 = window start; schedule = [10, 40, 160, 640]; horizon = window",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    direction: Direction,
    window: WindowSource,
    field: FieldSource,
    #[serde(default)]
    sets: BTreeMap<String, SetSource>,
    #[serde(default)]
    tubes: BTreeMap<String, TubeSource>,
    #[serde(default)]
    checks: Vec<CheckSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowSource {
    time: [f64; 2],
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    /// Half-width of a symmetric box, used when `lower`/`upper` are absent.
    half: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSource {
    components: Vec<String>,
    bound_m: Option<f64>,
    lipschitz_k: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetSource {
    phi: String,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TubeSource {
    lower: String,
    upper: String,
    interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
struct CheckSource {
    kind: CheckKind,
    name: Option<String>,
    expect: Option<Verdict>,
    seed: Option<u64>,
    #[serde(flatten)]
    params: toml::Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagumoParams {
    pub set: String,
    #[serde(default = "default_t_samples")]
    pub t_samples: usize,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzParams {
    pub set: String,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_slices")]
    pub slices: usize,
    pub hull_m: Option<f64>,
    pub k: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub horizon: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OkamuraParams {
    /// Family members `D*(P, .)`, each `[t, x1, ..]`.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Extra members given as expressions.
    #[serde(default)]
    pub certificates: Vec<String>,
    /// Trajectory starts at the window's initial time.
    pub starts: Vec<Vec<f64>>,
    #[serde(default = "default_nt")]
    pub nt: usize,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_okamura_step")]
    pub step: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComparisonSource {
    #[serde(default = "default_s")]
    s: String,
    #[serde(default)]
    kamke: bool,
    f: Option<String>,
    omega: String,
    interval: Option<[f64; 2]>,
    samples: Option<usize>,
    #[serde(default = "default_margin")]
    margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerronParams {
    pub tube: String,
    pub x0: f64,
    #[serde(default = "default_perron_step")]
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonParams {
    pub set: String,
    pub x0: Vec<f64>,
    pub t0: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
    pub horizon: Option<f64>,
}

fn default_t_samples() -> usize {
    8
}
fn default_boundary_samples() -> usize {
    16
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_spacing() -> f64 {
    0.05
}
fn default_slices() -> usize {
    11
}
fn default_trials() -> usize {
    20
}
fn default_nt() -> usize {
    64
}
fn default_nx() -> usize {
    128
}
fn default_okamura_step() -> f64 {
    1e-2
}
fn default_s() -> String {
    "norm".into()
}
fn default_perron_step() -> f64 {
    1e-3
}
fn default_schedule() -> Vec<usize> {
    vec![10, 40, 160, 640]
}

/// A check with its parameters resolved against the scenario.
#[derive(Debug, Clone)]
pub enum CheckParams {
    Nagumo { set: ImplicitSet, params: NagumoParams },
    Lipschitz { set: ImplicitSet, params: LipschitzParams },
    Okamura { points: Vec<(f64, Vec<f64>)>, certificates: Vec<Expr>, params: OkamuraParams },
    Comparison { problem: ComparisonProblem, samples: usize, margin: f64 },
    Perron { tube: Tube, params: PerronParams },
    Polygon { set: ImplicitSet, params: PolygonParams },
}

#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub kind: CheckKind,
    pub expect: Option<Verdict>,
    pub seed: u64,
    pub params: CheckParams,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub path: PathBuf,
    pub seed: u64,
    pub direction: Direction,
    pub window: Window,
    pub field: FieldSpec,
    pub checks: Vec<Check>,
}

/// Reads, overrides and resolves a scenario. `seed` replaces the file's seed.
pub fn load_scenario(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    parse_scenario(&text, path, overrides, seed)
}

pub fn parse_scenario(text: &str, path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Scenario, CliError> {
    let syntax = |e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        CliError::Syntax { path: path.into(), line, column, message: e.message().trim().to_string() }
    };
    let file: ScenarioFile = if overrides.is_empty() {
        toml::from_str(text).map_err(syntax)?
    } else {
        let mut table: toml::Table = toml::from_str(text).map_err(syntax)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table.try_into().map_err(|e: toml::de::Error| CliError::invalid("scenario", e.message().trim()))?
    };
    resolve(file, path, seed)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Applies `a.b.0.c=value`; the value is read as TOML, falling back to a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| CliError::Override(assignment.into()))?;
    let key = key.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Override(assignment.into()));
    }
    let missing = || CliError::invalid(key, "override path does not exist");
    let mut node = table.entry(parts[0].to_string()).or_insert(toml::Value::Table(toml::Table::new()));
    if parts.len() == 1 {
        *node = value;
        return Ok(());
    }
    for (i, part) in parts.iter().enumerate().skip(1) {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert(toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| missing())?;
                let slot = a.get_mut(idx).ok_or_else(missing)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(missing()),
        };
    }
    Ok(())
}

fn expression(key: impl Into<String>, src: &str) -> Result<Expr, CliError> {
    parse_expression(src).map_err(|source| CliError::Expression { key: key.into(), source })
}

fn params<T: DeserializeOwned>(key: &str, table: &toml::Table) -> Result<T, CliError> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| CliError::invalid(key, e.message().trim()))
}

fn lookup<T>(map: &BTreeMap<String, T>, key: &str, name: &str) -> Result<(), CliError> {
    if map.contains_key(name) {
        Ok(())
    } else {
        Err(CliError::Unresolved { key: key.into(), name: name.into() })
    }
}

fn resolve(file: ScenarioFile, path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let seed = seed.unwrap_or(file.seed);
    let left = file.direction == Direction::Left;
    let flip = |e: Expr| if left { e.substitute_time(&Expr::neg(Expr::time())) } else { e };

    let k = file.field.components.len();
    let (lower, upper) = match (&file.window.lower, &file.window.upper, file.window.half) {
        (Some(l), Some(u), None) => (l.clone(), u.clone()),
        (None, None, Some(h)) => (vec![-h; k], vec![h; k]),
        _ => return Err(CliError::invalid("window", "give either `lower` and `upper`, or `half`")),
    };
    let [a, b] = file.window.time;
    let time = if left { (-b, -a) } else { (a, b) };
    let window = Window::new(time, lower, upper).map_err(|e| CliError::invalid("window", e))?;

    let components = file
        .field
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| expression(format!("field.components[{i}]"), c))
        .collect::<Result<Vec<_>, _>>()?;
    let field = FieldSpec::with_estimates(components, &window, file.field.bound_m, file.field.lipschitz_k, seed)
        .map_err(|e| CliError::invalid("field", e))?;
    let field = if left { field.time_reversed() } else { field };

    let mut sets = BTreeMap::new();
    for (name, s) in &file.sets {
        let key = format!("sets.{name}.phi");
        let phi = flip(expression(&key, &s.phi)?);
        let set = match s.alpha {
            Some(alpha) => ImplicitSet::new(phi, alpha, window.clone()),
            None => ImplicitSet::with_estimated_alpha(phi, window.clone(), seed),
        }
        .map_err(|e| CliError::invalid(&key, e))?;
        sets.insert(name.clone(), set);
    }
    let mut tubes = BTreeMap::new();
    for (name, t) in &file.tubes {
        let lo = flip(expression(format!("tubes.{name}.lower"), &t.lower)?);
        let hi = flip(expression(format!("tubes.{name}.upper"), &t.upper)?);
        let interval = t.interval.map_or(window.time, |[a, b]| if left { (-b, -a) } else { (a, b) });
        let tube = Tube::new(lo, hi, interval).map_err(|e| CliError::invalid(format!("tubes.{name}"), e))?;
        tubes.insert(name.clone(), tube);
    }

    let mut checks = Vec::new();
    let mut labels = std::collections::BTreeSet::new();
    for (i, c) in file.checks.iter().enumerate() {
        let key = format!("checks[{i}]");
        let label = c.name.clone().unwrap_or_else(|| format!("{i}-{}", c.kind.as_str()));
        if label.is_empty() || label.contains(['/', '\\']) || !labels.insert(label.clone()) {
            return Err(CliError::invalid(&key, format!("check name `{label}` is empty, repeated or not a file name")));
        }
        let params = match c.kind {
            CheckKind::Nagumo => {
                let p: NagumoParams = params(&key, &c.params)?;
                lookup(&sets, &format!("{key}.set"), &p.set)?;
                CheckParams::Nagumo { set: sets[&p.set].clone(), params: p }
            }
            CheckKind::LipschitzMajorant => {
                let p: LipschitzParams = params(&key, &c.params)?;
                lookup(&sets, &format!("{key}.set"), &p.set)?;
                CheckParams::Lipschitz { set: sets[&p.set].clone(), params: p }
            }
            CheckKind::Polygon => {
                let p: PolygonParams = params(&key, &c.params)?;
                lookup(&sets, &format!("{key}.set"), &p.set)?;
                if p.x0.len() != k {
                    return Err(CliError::invalid(format!("{key}.x0"), format!("expected {k} coordinates")));
                }
                CheckParams::Polygon { set: sets[&p.set].clone(), params: p }
            }
            CheckKind::PerronTube => {
                let p: PerronParams = params(&key, &c.params)?;
                lookup(&tubes, &format!("{key}.tube"), &p.tube)?;
                if k != 1 {
                    return Err(CliError::invalid(&key, "perron-tube needs a scalar field"));
                }
                CheckParams::Perron { tube: tubes[&p.tube].clone(), params: p }
            }
            CheckKind::Okamura => {
                let p: OkamuraParams = params(&key, &c.params)?;
                let certificates = p
                    .certificates
                    .iter()
                    .enumerate()
                    .map(|(j, s)| expression(format!("{key}.certificates[{j}]"), s).map(flip))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut points = Vec::new();
                for (j, pt) in p.points.iter().enumerate() {
                    if pt.len() != k + 1 {
                        return Err(CliError::invalid(format!("{key}.points[{j}]"), format!("expected [t, x1..x{k}]")));
                    }
                    let t = if left { -pt[0] } else { pt[0] };
                    points.push((t, pt[1..].to_vec()));
                }
                if points.is_empty() && certificates.is_empty() {
                    return Err(CliError::invalid(&key, "the family needs `points` or `certificates`"));
                }
                if let Some(j) = p.starts.iter().position(|s| s.len() != k) {
                    return Err(CliError::invalid(format!("{key}.starts[{j}]"), format!("expected {k} coordinates")));
                }
                CheckParams::Okamura { points, certificates, params: p }
            }
            CheckKind::Thm4 | CheckKind::Thm7 | CheckKind::Thm8 => {
                let src: ComparisonSource = params(&key, &c.params)?;
                let s = match src.s.as_str() {
                    "norm" => SFunction::Norm,
                    "max" => SFunction::Max,
                    other => SFunction::Expr { expr: flip(expression(format!("{key}.s"), other)?), kamke: src.kamke },
                };
                let (mode, default_samples) = match c.kind {
                    CheckKind::Thm4 => (Mode::Surface, 32),
                    CheckKind::Thm7 => (Mode::Directional, 256),
                    _ => (Mode::Pointwise, 256),
                };
                let f_major = match (&src.f, mode) {
                    (Some(f), _) => flip(expression(format!("{key}.f"), f)?),
                    (None, Mode::Surface) => Expr::num(0.0),
                    (None, _) => return Err(CliError::invalid(&key, "missing the scalar right side `f`")),
                };
                let omega = flip(expression(format!("{key}.omega"), &src.omega)?);
                let interval = src.interval.map_or(window.time, |[a, b]| if left { (-b, -a) } else { (a, b) });
                let problem = ComparisonProblem::new(field.clone(), s, f_major, omega, interval, window.clone(), mode)
                    .map_err(|e| CliError::invalid(&key, e))?;
                CheckParams::Comparison { problem, samples: src.samples.unwrap_or(default_samples), margin: src.margin }
            }
        };
        checks.push(Check {
            label,
            kind: c.kind,
            expect: c.expect,
            seed: c.seed.unwrap_or(seed.wrapping_add(i as u64)),
            params,
        });
    }
    Ok(Scenario { name: file.name, path: path.into(), seed, direction: file.direction, window, field, checks })
}

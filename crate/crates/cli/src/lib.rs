//! Scenario-driven front end for the nagumo checks.

pub mod error;
pub mod run;
pub mod scenario;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use error::CliError;
pub use run::{run_checks, CheckOutcome, ScenarioReport};
pub use scenario::{load_scenario, CheckKind, Scenario};

/// Environment variable naming the output directory.
pub const OUT_DIR_VAR: &str = "NAGUMO_OUT_DIR";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub parallel: bool,
    pub overrides: Vec<String>,
    /// Leave out wall-clock data so reports compare byte for byte.
    pub comparison: bool,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: ScenarioReport,
    pub report_path: PathBuf,
}

impl RunSummary {
    /// 0 when every expectation matched, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.all_matched {
            0
        } else {
            1
        }
    }
}

/// Loads a scenario, runs its checks and writes the report, CSV and SVG files.
pub fn run_scenario(path: &Path, options: &RunOptions) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let scenario = load_scenario(path, &options.overrides, options.seed)?;
    let outcomes = run_checks(&scenario, options.parallel)?;
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Write { path: out_dir.clone(), source })?;
    let write = |name: String, bytes: &[u8]| {
        let p = out_dir.join(name);
        std::fs::write(&p, bytes).map_err(|source| CliError::Write { path: p.clone(), source })
    };
    for o in &outcomes {
        write(format!("{}.{}.csv", scenario.name, o.entry.label), &o.csv)?;
        write(format!("{}.{}.svg", scenario.name, o.entry.label), o.svg.as_bytes())?;
    }
    let run = (!options.comparison).then(|| run::RunInfo {
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        elapsed_ms: started.elapsed().as_millis() as u64,
    });
    let report = run::assemble(&scenario, &outcomes, run);
    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    let report_path = out_dir.join(format!("{}.report.json", scenario.name));
    write(format!("{}.report.json", scenario.name), json.as_bytes())?;
    Ok(RunSummary { report, report_path })
}

/// The table printed by `list`, restricted to kinds containing `filter`.
pub fn list_checks(filter: Option<&str>) -> String {
    let rows: Vec<CheckKind> =
        CheckKind::ALL.into_iter().filter(|k| filter.is_none_or(|f| k.as_str().contains(f))).collect();
    let width = CheckKind::ALL.iter().map(|k| k.as_str().len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}  parameters (defaults)\n", "check");
    for k in rows {
        out.push_str(&format!("{:<width$}  {}\n", k.as_str(), k.parameters()));
    }
    out
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nagumo_cli::{list_checks, run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "nagumo", about = "Invariance, comparison and polygon checks for ODE scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its report
    Run {
        scenario: PathBuf,
        /// Base seed, replacing the scenario's
        #[arg(long)]
        seed: Option<u64>,
        /// Run independent checks concurrently
        #[arg(long)]
        parallel: bool,
        /// Override a scenario key, e.g. `checks.0.expect=fail`
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Omit wall-clock fields so reports compare byte for byte
        #[arg(long)]
        comparison: bool,
    },
    /// List the available check kinds
    List { filter: Option<String> },
    /// Print the tool version
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, parallel, overrides, comparison } => {
            let options = RunOptions { seed, parallel, overrides, comparison, out_dir: None };
            match run_scenario(&scenario, &options) {
                Ok(summary) => {
                    for c in &summary.report.checks {
                        let expected = c.expected.map_or("-".to_string(), |v| v.to_string());
                        let mark = if c.matched { "ok" } else { "MISMATCH" };
                        println!("{:<24} {:<18} {:<8} expected {:<8} {mark}", c.label, c.kind.as_str(), c.report.verdict.as_str(), expected);
                    }
                    println!("report: {}", summary.report_path.display());
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::List { filter } => {
            print!("{}", list_checks(filter.as_deref()));
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("nagumo {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}

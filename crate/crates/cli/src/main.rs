//! Scenario runner for the consensus simulator.
//!
//! Runs one or more scenario files (optionally sweeping seeds), checks every
//! protocol invariant while running, optionally validates the measured
//! communication cost against the closed-form model, and writes transcripts
//! and reports. Exit status: 0 when every run and check passed, 1 when an
//! invariant or validation failed, 2 for unusable inputs.

mod explain;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;

use mvbc_core::metrics;
use mvbc_core::scenario::{Scenario, Strategy};
use mvbc_core::sim;
use mvbc_core::transcript::Transcript;

#[derive(Parser, Debug)]
#[command(
    name = "mvbc",
    about = "Deterministic simulator for error-free multi-valued Byzantine consensus",
    version
)]
struct Args {
    /// Scenario file (TOML or JSON); repeatable.
    #[arg(long = "scenario", value_name = "PATH")]
    scenarios: Vec<PathBuf>,

    /// Directory for transcripts and reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Run each scenario with this many consecutive seeds.
    #[arg(long, value_name = "K", default_value_t = 1)]
    sweep_seeds: u64,

    /// Check measured communication against the cost model.
    #[arg(long)]
    validate_complexity: bool,

    /// Override the scenario strategy.
    #[arg(long, value_name = "NAME")]
    strategy: Option<String>,

    /// Also write per-generation CSV rows next to each report.
    #[arg(long)]
    emit_csv: bool,

    /// Render a stored transcript as a narrative and exit.
    #[arg(long, value_name = "TRANSCRIPT")]
    explain: Option<PathBuf>,

    /// Only print failures.
    #[arg(long)]
    quiet: bool,

    /// Print full per-generation tables.
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Some(path) = &args.explain {
        return match explain_file(path) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        };
    }

    if args.scenarios.is_empty() {
        eprintln!("error: at least one --scenario is required (or --explain)");
        return ExitCode::from(2);
    }
    if args.sweep_seeds == 0 {
        eprintln!("error: --sweep-seeds must be at least 1");
        return ExitCode::from(2);
    }
    let strategy_override = match &args.strategy {
        None => None,
        Some(name) => match Strategy::parse(name) {
            Some(s) => Some(s),
            None => {
                eprintln!(
                    "error: unknown strategy {name:?}; expected one of {}",
                    Strategy::ALL.map(|s| s.name()).join(", ")
                );
                return ExitCode::from(2);
            }
        },
    };

    // Load and validate everything up front so configuration problems are
    // reported before any run starts.
    let mut jobs = Vec::new();
    for path in &args.scenarios {
        let mut scenario = match Scenario::load(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        };
        if let Some(s) = strategy_override {
            scenario.strategy = s;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        for i in 0..args.sweep_seeds {
            let mut s = scenario.clone();
            s.seed = scenario.seed.wrapping_add(i);
            let label = if args.sweep_seeds > 1 {
                format!("{stem}-seed{}", s.seed)
            } else {
                stem.clone()
            };
            jobs.push((label, s));
        }
    }

    if let Some(dir) = &args.out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    }

    let results: Vec<(String, Result<String, String>)> = jobs
        .par_iter()
        .map(|(label, scenario)| (label.clone(), run_one(label, scenario, &args)))
        .collect();

    let mut failures = 0usize;
    for (label, result) in &results {
        match result {
            Ok(line) => {
                if !args.quiet {
                    println!("{line}");
                }
            }
            Err(msg) => {
                failures += 1;
                eprintln!("FAIL {label}: {msg}");
            }
        }
    }
    if !args.quiet {
        println!(
            "{} run(s), {} failed",
            results.len(),
            failures
        );
    }
    if failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn run_one(label: &str, scenario: &Scenario, args: &Args) -> Result<String, String> {
    let outcome = sim::run_scenario(scenario).map_err(|e| e.to_string())?;

    let first_ff = (0..scenario.n)
        .find(|p| !outcome.faulty.contains(p))
        .expect("fewer than n faulty processors");
    let mut line = format!(
        "ok {label}: output 0x{} in {} generation(s), {} diagnosis stage(s)",
        outcome.outputs[first_ff]
            .as_ref()
            .map(|o| o.value.to_hex())
            .unwrap_or_default(),
        outcome.totals.generations,
        outcome.diagnosis_count
    );

    let report = if args.validate_complexity {
        let report = metrics::validate(&outcome.transcript).map_err(|e| e.to_string())?;
        if !report.passed {
            return Err(format!(
                "communication cost validation failed\n{}",
                report.render_table()
            ));
        }
        line.push_str(", cost model validated");
        Some(report)
    } else {
        None
    };

    if let Some(dir) = &args.out {
        write_artifacts(dir, label, &outcome.transcript, report.as_ref(), args.emit_csv)
            .map_err(|e| format!("writing artifacts: {e}"))?;
    }
    if args.verbose {
        if let Some(report) = &report {
            line.push('\n');
            line.push_str(&report.render_table());
        }
    }
    Ok(line)
}

fn write_artifacts(
    dir: &Path,
    label: &str,
    transcript: &Transcript,
    report: Option<&metrics::ValidationReport>,
    emit_csv: bool,
) -> std::io::Result<()> {
    std::fs::write(dir.join(format!("{label}.transcript.jsonl")), transcript.to_jsonl())?;
    if let Some(report) = report {
        std::fs::write(dir.join(format!("{label}.metrics.json")), report.to_json())?;
        if emit_csv {
            std::fs::write(dir.join(format!("{label}.metrics.csv")), report.render_csv())?;
        }
    }
    Ok(())
}

fn explain_file(path: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let transcript = Transcript::from_jsonl(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    explain::explain(&transcript)
}

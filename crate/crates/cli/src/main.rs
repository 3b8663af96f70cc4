//! Batch runner: one subcommand per experiment kind, artifacts in `--out`.
//!
//! Exit status: 0 all assertions hold, 1 an assertion failed, 2 configuration
//! error, 3 numerical failure.

mod config;
mod experiments;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, ExperimentConfig, ExperimentKind, Overrides};
use experiments::{Failure, FailureKind, Report};

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pseudorel", version, about = "Spectral experiments for (sqrt(-Delta + m^2) - m) u = |u|^{p-1} u")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Least-energy solution at one truncation.
    Solve(RunArgs),
    /// Large-mass convergence rate towards the limit problem.
    RateStudy(RunArgs),
    /// Pohozaev and Nehari identities across truncations.
    Pohozaev(RunArgs),
    /// Scaled symbol-derivative constants over a mass sweep.
    SymbolCheck(RunArgs),
    /// Closed-form bubble identities.
    BubbleCheck(RunArgs),
    /// Mountain-pass level of cut-off bubbles against the critical threshold.
    MpLevel(RunArgs),
    /// Pohozaev residual decay for a supercritical exponent and a control.
    NonexistenceProbe(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Space dimension.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    /// Truncation order per axis.
    #[arg(long)]
    order: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        use ExperimentKind as K;
        match self {
            Command::Solve(a) => (K::Solve, a),
            Command::RateStudy(a) => (K::RateStudy, a),
            Command::Pohozaev(a) => (K::Pohozaev, a),
            Command::SymbolCheck(a) => (K::SymbolCheck, a),
            Command::BubbleCheck(a) => (K::BubbleCheck, a),
            Command::MpLevel(a) => (K::MpLevel, a),
            Command::NonexistenceProbe(a) => (K::NonexistenceProbe, a),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, &args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<u8, ConfigError> {
    let file = match &args.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        n: args.n,
        p: args.p,
        m: args.m,
        order: args.order,
        seed: args.seed,
        out: args.out.clone(),
    };
    let resolved = config::resolve(kind, file, &overrides)?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError::new("threads", e.to_string()))?;
    }
    let out = resolved.out.clone().expect("resolved config has an output directory");
    let started = chrono::Utc::now();
    log::info!("{kind}: writing to {}", out.display());
    let outcome = experiments::run(&resolved);
    let written = persist(&out, kind, &outcome).and_then(|mut files| {
        fs::write(out.join("config.json"), config::emit(&resolved) + "\n")?;
        files.extend(["config.json".to_string(), "manifest.json".to_string()]);
        let manifest = json!({
            "tool": "pseudorel",
            "version": env!("CARGO_PKG_VERSION"),
            "started": started.to_rfc3339(),
            "finished": chrono::Utc::now().to_rfc3339(),
            "threads": args.threads.unwrap_or_else(rayon::current_num_threads),
            "config": resolved,
            "files": files,
        });
        output::write_json(&out.join("manifest.json"), &manifest)
    });
    if let Err(e) = written {
        eprintln!("cannot write artifacts to {}: {e}", out.display());
        return Ok(EXIT_NUMERICAL);
    }
    Ok(match outcome {
        Ok(report) if report.passed() => 0,
        Ok(report) => {
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("assertion failed: {} ({})", c.name, c.detail);
            }
            EXIT_ASSERTION
        }
        Err(f) => {
            eprintln!("{kind} failed: {}", f.message);
            match f.kind {
                FailureKind::Configuration => EXIT_CONFIG,
                FailureKind::Numerical => EXIT_NUMERICAL,
            }
        }
    })
}

/// Writes summaries and tables; returns the file names written.
fn persist(out: &Path, kind: ExperimentKind, outcome: &Result<Report, Failure>) -> std::io::Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut text = format!("experiment: {kind}\n");
    match outcome {
        Ok(report) => {
            let summary = json!({
                "kind": kind,
                "passed": report.passed(),
                "checks": report.checks,
                "results": report.results,
            });
            output::write_json(&out.join("summary.json"), &summary)?;
            files.push("summary.json".to_string());
            for table in &report.tables {
                output::write_csv(out, table)?;
                files.push(table.file.to_string());
            }
            text.push_str(&format!("status: {}\n", if report.passed() { "PASS" } else { "FAIL" }));
            for c in &report.checks {
                text.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
            }
            if report.checks.is_empty() {
                text.push_str("(no assertions for this configuration)\n");
            }
            text.push_str(&format!("tables: {}\n", report.tables.iter().map(|t| t.file).collect::<Vec<_>>().join(", ")));
        }
        Err(f) => {
            output::write_json(&out.join("error.json"), &json!({ "kind": kind, "error": f }))?;
            files.push("error.json".to_string());
            text.push_str(&format!("status: ERROR ({})\n{}\n", serde_json::to_value(f.kind).unwrap_or_default(), f.message));
        }
    }
    fs::write(out.join("summary.txt"), text)?;
    files.push("summary.txt".to_string());
    Ok(files)
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

mod config;
mod scenario;
mod sweep;

use config::{parse_config, ConfigError, ScenarioConfig};
use scenario::{Artifacts, Check, Outcome};

#[derive(Parser)]
#[command(name = "dinls", version, about = "Ground states, GN checks and blow-up runs for the divergence-form inhomogeneous NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a ground-state profile.
    Groundstate(Common),
    /// Sharp GN constant and inequality checks on a trial battery.
    GnCheck(Common),
    /// Time evolution with blow-up detection, rate fit and bound checks.
    Evolve(Common),
    /// Evolution plus virial, ρ and concentration diagnostics.
    Diagnose(Common),
    /// Parameter sweep of the evolution; writes a summary table.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Overrides the trial-battery seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads of the global pool.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Groundstate(_) => "groundstate",
            Command::GnCheck(_) => "gn-check",
            Command::Evolve(_) => "evolve",
            Command::Diagnose(_) => "diagnose",
            Command::Sweep(_) => "sweep",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Groundstate(c)
            | Command::GnCheck(c)
            | Command::Evolve(c)
            | Command::Diagnose(c)
            | Command::Sweep(c) => c,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    config: &'a ScenarioConfig,
    seed: u64,
    threads: Option<usize>,
    grid_hash: Option<String>,
    wall_time_s: f64,
    files: &'a [String],
    checks: &'a [Check],
    passed: bool,
}

fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let canonical = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect())
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    if let Some(ce) = e.downcast_ref::<ConfigError>() {
        return ce.to_json();
    }
    let code = e
        .chain()
        .find_map(|c| c.downcast_ref::<dinls_core::Error>())
        .map_or("runtime_error", |ce| ce.code());
    serde_json::json!({ "error": code, "message": format!("{e:#}") })
}

fn execute(cmd: &Command, cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome> {
    match cmd {
        Command::Groundstate(_) => scenario::groundstate(cfg, art),
        Command::GnCheck(_) => scenario::gn_check(cfg, art),
        Command::Evolve(_) => scenario::evolve(cfg, art),
        Command::Diagnose(_) => scenario::diagnose(cfg, art),
        Command::Sweep(_) => {
            let rows = sweep::sweep(cfg)?;
            sweep::write_summary(&art.path("summary.csv"), &rows)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            Ok(Outcome {
                checks: vec![Check {
                    name: "runs".into(),
                    passed: true,
                    asserted: false,
                    detail: format!("{} runs, {failed} failed", rows.len()),
                }],
                grid_hash: String::new(),
            })
        }
    }
}

fn run_cli(cli: &Cli) -> Result<bool> {
    let common = cli.command.common();
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.gn.battery.seed = seed;
    }
    let start = Instant::now();
    let mut art = Artifacts::new(&common.out)?;
    let result = execute(&cli.command, &cfg, &mut art);
    let (checks, grid_hash, failure) = match result {
        Ok(outcome) => {
            let hash = (!outcome.grid_hash.is_empty()).then_some(outcome.grid_hash);
            (outcome.checks, hash, None)
        }
        Err(e) => {
            let record = error_record(&e);
            dinls_core::io::write_json(&art.path("error.json"), &record)?;
            (Vec::new(), None, Some(e))
        }
    };
    let passed = failure.is_none() && checks.iter().filter(|c| c.asserted).all(|c| c.passed);
    let manifest_path = art.path("manifest.json");
    let manifest = Manifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&cfg)?,
        config: &cfg,
        seed: cfg.gn.battery.seed,
        threads: common.threads,
        grid_hash,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: &art.files,
        checks: &checks,
        passed,
    };
    dinls_core::io::write_json(&manifest_path, &manifest)?;
    for c in &checks {
        let status = if c.passed { "ok" } else if c.asserted { "FAILED" } else { "flag" };
        println!("{:<28} {status:<6} {}", c.name, c.detail);
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(passed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_record(&e));
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! Command-line front end for the energy-minimization experiments.
//!
//! Exit status: 0 when at least one run succeeded, 2 when every run was
//! infeasible, 1 on any other error. Log verbosity follows `RUST_LOG`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use log::{info, warn};

use wpmec::experiment::{emit_report, run_scheme, summarize, ExperimentConfig, RunRecord};

#[derive(Debug, Parser)]
#[command(name = "wpmec", version, about = "Monte-Carlo energy-minimization experiments")]
struct Args {
    /// Flat `key = value` configuration file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// with-irs, rand-phase, without-irs, a comma list, or `all`.
    #[arg(long, value_name = "NAME")]
    scheme: Option<String>,

    #[arg(long, value_name = "N")]
    trials: Option<usize>,

    /// Base seed; trial `t` uses `seed + t`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Parameter sweep, e.g. `N=10,20,30`. One of N, d1, beta, vartheta, tau.
    #[arg(long, value_name = "NAME=v1,v2,...")]
    sweep: Option<String>,

    /// Energy-transfer fraction of the block.
    #[arg(long, value_name = "F")]
    tau: Option<f64>,

    /// Output directory for the records and plot data.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn configure(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("scheme", args.scheme.clone()),
        ("trials", args.trials.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("sweep", args.sweep.clone()),
        ("tau", args.tau.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).with_context(|| format!("--{key}"))?;
        }
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(records: &[RunRecord]) {
    println!("{:<12} {:>12} {:>14} {:>14} {:>6}", "scheme", "value", "mean_J", "std_J", "ok");
    for row in summarize(records) {
        println!(
            "{:<12} {:>12.6} {:>14.6e} {:>14.6e} {:>3}/{:<3}",
            row.scheme.name(),
            row.value,
            row.mean,
            row.std,
            row.n,
            row.n + row.failed
        );
    }
}

fn run(args: &Args) -> Result<bool> {
    let cfg = configure(args)?;
    info!(
        "{} trial(s), seed {}, schemes {:?}",
        cfg.trials,
        cfg.seed,
        cfg.schemes.iter().map(|s| s.name()).collect::<Vec<_>>()
    );
    let start = Instant::now();
    let records = run_scheme(&cfg)?;
    info!("{} run(s) in {:.1?}", records.len(), start.elapsed());

    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        warn!("{failed} of {} run(s) infeasible", records.len());
    }
    let files = emit_report(&records, &cfg.out)?;
    print_summary(&records);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(failed < records.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: every run was infeasible");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `mmwave-sim`: run a Monte-Carlo campaign and write CSV results.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime, numerical or I/O
//! failure (including campaigns where any trial failed).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use mmwave_core::config::parse_config_with_overrides;
use mmwave_core::harness::run_campaign;
use mmwave_core::output::emit_results;
use mmwave_core::Error;

#[derive(Debug, Parser)]
#[command(name = "mmwave-sim", version, about = "Multiuser mmWave MIMO channel-estimation and rate simulator")]
struct Cli {
    /// Scenario file with `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Number of trials (overrides the config).
    #[arg(long)]
    trials: Option<usize>,

    /// Output prefix; writes <PREFIX>_rates.csv, _summary.csv and _cdf.csv.
    #[arg(long = "out", value_name = "PREFIX", default_value = "mmwave")]
    out: PathBuf,

    /// Suppress progress and summary output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(trials) = cli.trials {
        overrides.push(format!("trials={trials}"));
    }
    let cfg = match parse_config_with_overrides(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };

    let started = Instant::now();
    let campaign = match run_campaign(&cfg) {
        Ok(c) => c,
        Err(e @ Error::CampaignFailed { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let paths = match emit_results(&campaign, &cli.out) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error writing results: {e}");
            return ExitCode::from(2);
        }
    };

    if !cli.quiet {
        println!(
            "{} trials in {:.2} s ({} failed)",
            campaign.trials.len(),
            started.elapsed().as_secs_f64(),
            campaign.failures.len()
        );
        println!("{:<4} {:<7} {:<8} {:>14} {:>14}", "link", "mode", "csi", "median Mb/s", "p90 Mb/s");
        for (key, s) in &campaign.stats.series {
            println!(
                "{:<4} {:<7} {:<8} {:>14.1} {:>14.1}",
                key.link.as_str(),
                key.bf_mode.as_str(),
                key.estimator.as_str(),
                s.median / 1e6,
                s.p90 / 1e6
            );
        }
        println!("wrote {}", paths.rates.display());
    }
    for (trial, msg) in &campaign.failures {
        eprintln!("trial {trial} failed: {msg}");
    }
    if campaign.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

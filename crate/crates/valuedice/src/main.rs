use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use valuedice::config::split_override_args;
use valuedice::harness::{self, summary_path};
use valuedice::{Algorithm, ExperimentConfig, HarnessError};

/// Tabular ValueDICE experiments.
///
/// Any config field can be overridden with a dotted flag, e.g.
/// `--training.batch-size 32` or `--environment.gamma=0.9`.
#[derive(Debug, Parser)]
#[command(name = "valuedice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the configured algorithm on every seed.
    Run(Common),
    /// Train ValueDICE, BC and GAIL on identical demonstrations.
    Compare(Common),
    /// Train one seed and write its `update,kl` curve.
    Export(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds (overrides the config's `seeds`).
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Algorithm name (overrides the config's `algorithm`).
    #[arg(long)]
    algorithm: Option<String>,
}

fn load(common: &Common, overrides: &[(String, String)]) -> Result<ExperimentConfig, HarnessError> {
    let base = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(name) = &common.algorithm {
        cfg.algorithm = name.parse::<Algorithm>().map_err(|message| HarnessError::Config {
            field: String::from("algorithm"),
            message,
        })?;
    }
    if let Some(seeds) = &common.seed {
        cfg.seeds = seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &harness::Report) {
    for alg in &report.summary.algorithms {
        println!(
            "{:<20} final KL mean {:.6e} stddev {:.6e} over {} seed(s)",
            alg.algorithm.as_str(),
            alg.final_kl_mean,
            alg.final_kl_stddev,
            alg.seeds.len()
        );
    }
}

fn execute(command: Command, overrides: &[(String, String)]) -> Result<(), HarnessError> {
    match command {
        Command::Run(common) => {
            let cfg = load(&common, overrides)?;
            let report = harness::run_experiment(&cfg)?;
            report.write(&cfg.output)?;
            print_summary(&report);
            println!("wrote {} and {}", cfg.output.display(), summary_path(&cfg.output).display());
        }
        Command::Compare(common) => {
            let cfg = load(&common, overrides)?;
            let report = harness::compare_baselines(&cfg)?;
            report.write(&cfg.output)?;
            print_summary(&report);
            let ranking: Vec<&str> = report.summary.ranking.iter().map(|a| a.as_str()).collect();
            println!("ranking: {}", ranking.join(" < "));
            println!("wrote {} and {}", cfg.output.display(), summary_path(&cfg.output).display());
        }
        Command::Export(common) => {
            let mut cfg = load(&common, overrides)?;
            cfg.seeds.truncate(1);
            let seed = cfg.seeds[0];
            let setup = harness::build_setup(&cfg, seed)?;
            let result = harness::train(&cfg, cfg.algorithm, &setup, seed)?;
            harness::export_kl_curve(&result, &cfg.output)?;
            println!(
                "seed {seed}: {} points, final KL {:.6e}; wrote {}",
                result.kl_curve.len(),
                result.final_kl(),
                cfg.output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_override_args(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match execute(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

//! `dspe` — experiment runner for the DSPE datapath simulator.
//!
//! Subcommands: `run` a single config, `sweep` a parameter grid,
//! `conformance` the exhaustive multiplier/encoder suites, `audit` the
//! pruning decisions. Set `DSPE_LOG=debug` for verbose logging.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 conformance failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use dspe_core::config::RunConfig;
use dspe_core::runner::{self, SweepGrid};

#[derive(Parser)]
#[command(name = "dspe", version, about = "DSPE datapath simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "dspe-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the baseline and the featured run for one config.
    Run(ConfigArgs),
    /// Cartesian sweep over a parameter grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Grid JSON: {"parameter": [values...], ...}.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Exhaustive multiplier and Booth-encoder conformance suites.
    Conformance {
        /// Output directory for the CSV dumps.
        #[arg(long, default_value = "dspe-out")]
        out: PathBuf,
    },
    /// Offline root audit of the pruning decisions.
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Fraction of decisions to audit, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        sample_rate: f64,
    },
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DSPE_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let artifacts = runner::cmd_run(&config, &args.out)?;
            log::info!(
                "run complete: {} tokens, energy ratio {:.4}",
                artifacts.featured.outputs.len(),
                artifacts.report.savings.energy_ratio
            );
            println!(
                "report: {}",
                args.out.join("report.json").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, grid } => {
            let base = load_config(&config)?;
            let text = std::fs::read_to_string(&grid)
                .with_context(|| format!("reading grid {}", grid.display()))?;
            let grid: SweepGrid = serde_json::from_str(&text).context("parsing grid")?;
            let reports = runner::cmd_sweep(&base, &grid, &config.out)?;
            println!(
                "swept {} points: {}",
                reports.len(),
                config.out.join("sweep.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Conformance { out } => {
            let report = runner::cmd_conformance(&out)?;
            if report.passed() {
                println!(
                    "conformance clean: {} multiplier pairs, {} Booth operands",
                    report.posit_pairs, report.booth_operands
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for line in report
                    .posit_mismatches
                    .iter()
                    .chain(&report.booth_mismatches)
                {
                    eprintln!("mismatch: {line}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Audit {
            config,
            sample_rate,
        } => {
            let config_file = load_config(&config)?;
            let report = runner::cmd_audit(&config_file, sample_rate, &config.out)?;
            println!(
                "audit over {} samples, minimum agreement {:.4}",
                report.sample_size,
                report.min_rate()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

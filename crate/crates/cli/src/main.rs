use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cptc::datagen::{gen_bouncing_ball, gen_switching_ar, BouncingBallConfig, SwitchingArConfig};
use cptc::harness::{self, DatasetSpec, ExperimentConfig, ExperimentOutput, MethodSummary};
use cptc::Error;

/// Online conformal prediction for switching time series.
#[derive(Debug, Parser)]
#[command(name = "cptc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (`generate`: output CSV file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary table.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured synthetic series as `t,y,z` CSV.
    Generate,
    /// Run every method on every seed.
    Run,
    /// Run once per value of a parameter.
    Sweep {
        /// One of alpha, gamma, epsilon, aggregation, resolution, warm_start, lookback.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Recompute summaries from the per-step files in `--out`.
    Report,
    /// Print the effective config as JSON.
    PrintConfig,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(methods: &[MethodSummary]) {
    println!(
        "{:<32} {:>5} {:>17} {:>17}",
        "method", "runs", "coverage", "width"
    );
    for m in methods {
        println!(
            "{:<32} {:>5} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            m.method, m.runs, m.coverage_mean, m.coverage_std, m.width_mean, m.width_std
        );
    }
}

fn finish(cfg: &ExperimentConfig, out: &ExperimentOutput, quiet: bool) -> Result<(), Error> {
    harness::write_outputs(&cfg.output_dir, out)?;
    if !quiet {
        print_table(&out.methods);
        println!("wrote {}", cfg.output_dir.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    let common = &cli.common;
    match cli.command {
        Command::PrintConfig => {
            println!("{}", load_config(common)?.to_json());
        }
        Command::Generate => {
            let cfg = load_config(common)?;
            let seed = common.seed.unwrap_or(cfg.seeds[0]);
            let series = match &cfg.dataset {
                DatasetSpec::BouncingBall(b) => gen_bouncing_ball(&BouncingBallConfig { seed, ..b.clone() })?,
                DatasetSpec::SwitchingAr(s) => gen_switching_ar(&SwitchingArConfig { seed, ..s.clone() })?,
                DatasetSpec::Csv { .. } => {
                    return Err(Error::Config {
                        field: "dataset".into(),
                        message: "generate needs a synthetic dataset".into(),
                    })
                }
            };
            let path = common.out.clone().unwrap_or_else(|| PathBuf::from("series.csv"));
            series.write_csv(&path)?;
            if !common.quiet {
                println!("wrote {} points to {}", series.len(), path.display());
            }
        }
        Command::Run => {
            let cfg = load_config(common)?;
            let out = harness::run_experiment(&cfg)?;
            finish(&cfg, &out, common.quiet)?;
        }
        Command::Sweep { param, values } => {
            let cfg = load_config(common)?;
            let out = harness::sweep(&cfg, &param, &values)?;
            finish(&cfg, &out, common.quiet)?;
        }
        Command::Report => {
            let dir = match &common.out {
                Some(dir) => dir.clone(),
                None => load_config(common)?.output_dir,
            };
            let (_, methods) = harness::report(&dir)?;
            if !common.quiet {
                print_table(&methods);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

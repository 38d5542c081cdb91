use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use icb_core::Algorithm;
use icb_lab::config::{parse_seed_list, ExperimentConfig, ExperimentKind, Overrides, ScheduleKind};
use icb_lab::{run_experiment, verify};

#[derive(Parser)]
#[command(
    name = "icb-lab",
    version,
    about = "Bandit learner / reward-free observer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run one experiment and write results.csv, summary.csv and manifest.json.
    Run(RunArgs),
    /// Run the transfer-inequality and numerical self-checks; exit 0 iff all pass.
    Verify,
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    #[arg(long, value_parser = parse_kind)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    alpha_ucb: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// naive | rule_based | fixed | oracle
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<ScheduleKind>,
    /// Burn-in exponent (or the length, for the fixed schedule).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `1..=20` or `1,2,3`
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    eval_size: Option<usize>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: icb_lab::LabError| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: icb_core::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<ScheduleKind, String> {
    s.parse().map_err(|e: icb_lab::LabError| e.to_string())
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    parse_seed_list(s).map(SeedList).map_err(|e| e.to_string())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        experiment: args.experiment,
        d: args.d,
        k: args.k,
        n: args.n,
        sigma: args.sigma,
        algorithm: args.algorithm,
        alpha_ucb: args.alpha_ucb,
        nu: args.nu,
        schedule: args.schedule,
        alpha: args.alpha,
        lambda: args.lambda,
        seeds: args.seeds.map(|s| s.0),
        eval_size: args.eval_size,
        out: args.out,
    })?;
    let manifest =
        run_experiment(&cfg).with_context(|| format!("experiment {} failed", cfg.experiment))?;
    println!(
        "{}: wrote {} to {}",
        manifest.experiment,
        manifest.outputs.join(", "),
        cfg.output_dir.display()
    );
    if !manifest.derived.is_null() {
        println!("{}", manifest.derived);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Command::Verify => {
            let checks = verify::run_all();
            for c in &checks {
                println!(
                    "{} {:<16} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml_string());
            ExitCode::SUCCESS
        }
    }
}

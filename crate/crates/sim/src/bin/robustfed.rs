use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robustfed_core::{AggregatorKind, AttackKind};
use robustfed_sim::{output, run_experiment, run_suite, ExperimentConfig, Overrides, Result};

/// Robust federated aggregation experiments.
#[derive(Parser)]
#[command(name = "robustfed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, reliability.csv, summary.json and table.csv.
    Run(RunArgs),
    /// Run every aggregator x attack pair and write table.csv.
    Suite(RunArgs),
    /// Check a config and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_aggregator)]
    aggregator: Option<AggregatorKind>,
    #[arg(long, value_parser = parse_attack)]
    attack: Option<AttackKind>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Training threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_aggregator(s: &str) -> std::result::Result<AggregatorKind, String> {
    s.parse().map_err(|e: robustfed_core::Error| e.to_string())
}

fn parse_attack(s: &str) -> std::result::Result<AttackKind, String> {
    s.parse().map_err(|e: robustfed_core::Error| e.to_string())
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            seed: self.seed,
            aggregator: self.aggregator,
            attack: self.attack,
            rounds: self.rounds,
            workers: self.workers,
        });
        cfg.validate()?;
        Ok(cfg.normalized())
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let result = run_experiment(&cfg)?;
    output::write_run(&args.out, &cfg, &result)?;
    println!(
        "{} / {}: final accuracy {:.4}, best {:.4}; wrote {}",
        cfg.aggregator.name,
        cfg.attack.kind,
        result.final_accuracy(),
        result.best().1,
        args.out.display()
    );
    Ok(())
}

/// `Ok(false)` when the table was written but every cell failed.
fn suite(args: &RunArgs) -> Result<bool> {
    let mut cfg = args.config()?;
    cfg.suite.get_or_insert_with(Default::default);
    let table = run_suite(&cfg)?;
    output::write_suite(&args.out, &table)?;
    let ok = table.succeeded();
    if ok == 0 {
        let first = table
            .cells
            .iter()
            .find_map(|c| c.outcome.clone().err())
            .unwrap_or_default();
        eprintln!(
            "error[suite]: all {} cells failed (first: {first})",
            table.cells.len()
        );
        return Ok(false);
    }
    println!(
        "{ok}/{} cells succeeded; wrote {}",
        table.cells.len(),
        args.out.join("table.csv").display()
    );
    Ok(true)
}

fn validate(path: Option<&Path>) -> Result<()> {
    let cfg = load(path)?;
    cfg.validate()?;
    print!("{}", cfg.normalized().to_toml());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a).map(|()| true),
        Command::Suite(a) => suite(a),
        Command::Validate { config } => validate(config.as_deref()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

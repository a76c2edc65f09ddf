//! Command-line experiment runner.
//!
//! ```text
//! datamarket run   --config experiment.toml [--out results/]
//! datamarket sweep --family log --budget 60 --n 1000 --c-start 0.05 --c-stop 5 --c-step 0.05 --seed 7
//! datamarket solve --family linear --budget 0.25 --prices prices.csv
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when
//! `solve` cannot find `c`.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use datamarket::experiment::{run_experiment, CSweep, ExperimentConfig, ExperimentResult};
use datamarket::{BudgetProblem, Family};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "datamarket", version, about = "Truthful data-market pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (budget, n, family) cell of a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sweep c for one cell with sampled prices.
    Sweep {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c_start: f64,
        #[arg(long)]
        c_stop: f64,
        #[arg(long)]
        c_step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the budget-optimal c for prices read from a CSV file.
    Solve {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        prices: PathBuf,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Write results.csv and summary.json here instead of printing CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => ExperimentConfig::load(&config)
            .with_context(|| format!("loading {}", config.display()))
            .map_err(Failure::Config)
            .and_then(|cfg| experiment(&cfg, out.out.as_deref())),
        Command::Sweep {
            family,
            budget,
            n,
            c_start,
            c_stop,
            c_step,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig {
                n_providers: vec![n],
                budgets: vec![budget],
                family: vec![family],
                c_sweep: Some(CSweep {
                    start: c_start,
                    stop: c_stop,
                    step: c_step,
                }),
                seed,
                ..Default::default()
            };
            experiment(&cfg, out.out.as_deref())
        }
        Command::Solve {
            family,
            budget,
            prices,
        } => solve(family, budget, &prices),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(), Failure> {
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    let result = run_experiment(cfg).map_err(|e| Failure::Config(e.into()))?;
    emit(&result, out).map_err(Failure::Config)
}

fn emit(result: &ExperimentResult, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            result.write_to(dir)?;
            for cell in &result.cells {
                let c = cell
                    .solved_c
                    .map(|c| format!("{c:.6}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "budget={} n={} family={} c={} deals={} violations={}",
                    cell.budget,
                    cell.n,
                    cell.family,
                    c,
                    cell.deals,
                    cell.ledger_violations.len()
                );
            }
            println!("wrote {}", dir.display());
        }
        None => print!("{}", result.to_csv()?),
    }
    Ok(())
}

fn solve(family: Family, budget: f64, path: &Path) -> Result<(), Failure> {
    let prices = read_prices(path).map_err(Failure::Config)?;
    let problem =
        BudgetProblem::new(family, prices, budget).map_err(|e| Failure::Config(e.into()))?;
    let solved = problem.solve().map_err(|e| Failure::Solver(e.into()))?;
    println!("{}", solved.allocator.c());
    Ok(())
}

/// Reads every number in a CSV file. A first row that does not parse is
/// treated as a header.
fn read_prices(path: &Path) -> anyhow::Result<Vec<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut prices = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let fields: Vec<&str> = record.iter().filter(|f| !f.is_empty()).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => prices.extend(values),
            Err(_) if row == 0 => continue,
            Err(e) => bail!("{}: row {}: {e}", path.display(), row + 1),
        }
    }
    if prices.is_empty() {
        bail!("{}: no prices found", path.display());
    }
    Ok(prices)
}

//! `designbench`: analyze experiments, run simulation campaigns, run oracles.
//!
//! Exit codes: 0 success, 2 usage or config, 3 data, 4 numerical or design,
//! 5 verification failure.

mod analyze;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use designbench::simulation::run_monte_carlo_with_threads;
use designbench::verify::{self, Suite};
use designbench::{EstimatorId, VarianceMethod};

use crate::analyze::Format;
use crate::data::Columns;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "designbench", version, about = "Design-based average treatment effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the average treatment effect from a CSV file.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo campaign from a config file.
    Simulate(SimulateArgs),
    /// Run the built-in exact oracles.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: SuiteArg,
    },
}

#[derive(Debug, clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    /// Comma-separated covariate columns, or `all` for every remaining column.
    #[arg(long)]
    covariates: Option<String>,
    /// Integer stratum labels; switches to stratified cf inference.
    #[arg(long)]
    stratum: Option<String>,
    /// Default: dif without covariates, all five with covariates, cf when stratified.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<EstimatorId>,
    /// Default: hc0,hc2,hc3,dbhc3 (hc3,dbhc3 when stratified).
    #[arg(long, value_delimiter = ',')]
    se: Vec<VarianceMethod>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count; results do not depend on it.
    #[arg(long, env = "DESIGNBENCH_THREADS")]
    threads: Option<usize>,
    /// Overrides `reps` in the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Moments,
    Unbiasedness,
    Loo,
    Projections,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Moments => Suite::Moments,
            SuiteArg::Unbiasedness => Suite::Unbiasedness,
            SuiteArg::Loo => Suite::Loo,
            SuiteArg::Projections => Suite::Projections,
            SuiteArg::All => Suite::All,
        }
    }
}

fn run_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let covariates = match args.covariates.as_deref().map(str::trim) {
        None | Some("") => Some(Vec::new()),
        Some("all") => None,
        Some(list) => Some(list.split(',').map(|c| c.trim().to_string()).collect()),
    };
    let columns = Columns { outcome: args.outcome, treatment: args.treatment, covariates, stratum: args.stratum };
    let data = data::read_csv(&args.input, &columns)?;
    let stratified = data.strata.is_some();
    let estimators = match args.estimators {
        e if !e.is_empty() => e,
        _ if stratified => vec![EstimatorId::Cf],
        _ if data.covariates.is_empty() => vec![EstimatorId::Dif],
        _ => EstimatorId::ALL.to_vec(),
    };
    let methods = match args.se {
        m if !m.is_empty() => m,
        _ if stratified => vec![VarianceMethod::Hc3, VarianceMethod::DbHc3],
        _ => VarianceMethod::ALL.to_vec(),
    };
    let format = match args.format {
        FormatArg::Table => Format::Table,
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let analysis = analyze::analyze(&data, &estimators, &methods, args.level)?;
    print!("{}", analysis.render(format));
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let path = args.config.display().to_string();
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io { path, source })?;
    let mut campaign = config::parse(&text)?;
    if let Some(reps) = args.reps {
        campaign.config.reps = reps;
    }
    if let Some(seed) = args.seed {
        campaign.config.master_seed = seed;
    }
    let out = args.out.or(campaign.out_dir).unwrap_or_else(|| PathBuf::from("."));
    if args.threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    campaign.config.validate().map_err(CliError::from_config)?;
    let result = run_monte_carlo_with_threads(&campaign.config, args.threads).map_err(CliError::from_config)?;
    let (csv, json) = result
        .write_files(&out)
        .map_err(|source| CliError::Io { path: out.display().to_string(), source })?;
    print!("{}", result.to_table());
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn run_verify(suite: Suite) -> CliResult<()> {
    let checks = verify::run(suite);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::Verification { failed });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Analyze(args) => run_analyze(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Verify { suite } => run_verify(suite.into()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

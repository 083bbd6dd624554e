mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand as ClapSubcommand};
use solcur::metrics::MetricKind;

use commands::{run_subcommand, Classify, Failure, Subcommand};
use config::{Overrides, RunConfig, Stage, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "solcur",
    version,
    about = "Clean, curate, split and evaluate molecular solubility datasets",
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file, or a manifest.*.json from an earlier run
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [config: out_dir, env: SOLCUR_OUT_DIR]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of folds
    #[arg(long, global = true, value_name = "K")]
    folds: Option<usize>,
    /// Keep formal charges when standardizing
    #[arg(long, global = true)]
    no_neutralize: bool,
    /// Keep only records at 25 ± 5 °C and pH 7 ± 1
    #[arg(long, global = true)]
    protocol_filter: bool,
    /// Tables read by split, train-eval and hpo-demo
    #[arg(long, global = true, value_enum)]
    stage: Option<Stage>,
    /// TOML file of SET = weight entries
    #[arg(long, global = true, value_name = "FILE")]
    quality_weights: Option<PathBuf>,
    /// Curation merge threshold in log units
    #[arg(long, global = true, value_name = "D")]
    merge_threshold: Option<f64>,
    /// Input CSV (repeatable); replaces the configured inputs
    #[arg(long = "input", short = 'i', global = true, value_name = "CSV")]
    inputs: Vec<PathBuf>,
    /// rmse, curmse or curmse-error-weighted
    #[arg(long, global = true, value_parser = parse_metric)]
    metric: Option<MetricKind>,
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s).ok_or_else(|| format!("unknown metric '{s}'"))
}

#[derive(ClapSubcommand)]
enum Command {
    /// Standardize, filter and deduplicate each input; weight records per molecule
    Clean,
    /// Extend each cleaned set with the other sets' records and merge close values
    Curate,
    /// Write a molecule-coherent fold plan per dataset
    Split,
    /// Cross-validate the configured ridge model and write predictions
    TrainEval,
    /// Score predictions with bootstrap confidence intervals
    Eval {
        /// Predictions CSV (molecule_key, predicted, observed, weight); repeatable
        #[arg(long, value_name = "CSV")]
        predictions: Vec<PathBuf>,
        /// Method label for the report table
        #[arg(long)]
        method: Option<String>,
    },
    /// Hyperparameter-selection bias experiment and per-dataset selection
    HpoDemo,
    /// Markdown dataset × method table from stored metric rows
    Report {
        /// Additional metrics CSV files
        #[arg(long, value_name = "CSV")]
        reports: Vec<PathBuf>,
    },
}

impl Command {
    fn to_subcommand(&self) -> Subcommand {
        match self {
            Command::Clean => Subcommand::Clean,
            Command::Curate => Subcommand::Curate,
            Command::Split => Subcommand::Split,
            Command::TrainEval => Subcommand::TrainEval,
            Command::Eval {
                predictions,
                method,
            } => Subcommand::Eval {
                predictions: predictions.clone(),
                method: method.clone(),
            },
            Command::HpoDemo => Subcommand::HpoDemo,
            Command::Report { reports } => Subcommand::Report {
                reports: reports.clone(),
            },
        }
    }
}

fn effective_config(g: &GlobalArgs) -> Result<(RunConfig, Vec<PathBuf>), Failure> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path).config_err()?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out_dir: g.out_dir.clone(),
        seed: g.seed,
        folds: g.folds,
        no_neutralize: g.no_neutralize,
        protocol_filter: g.protocol_filter,
        stage: g.stage,
        quality_weights: g.quality_weights.clone(),
        merge_threshold: g.merge_threshold,
        inputs: g.inputs.clone(),
        metric: g.metric,
    });
    let env_out = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    let mut read = cfg.resolve(env_out).config_err()?;
    if let Some(path) = &g.config {
        read.insert(0, path.clone());
    }
    Ok((cfg, read))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = effective_config(&cli.global).and_then(|(cfg, read)| {
        if cfg.inputs.iter().any(|i| i.path.as_os_str().is_empty()) {
            return Err(Failure::Config(anyhow!("input with an empty path")));
        }
        run_subcommand(&cli.command.to_subcommand(), &cfg, &read)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}

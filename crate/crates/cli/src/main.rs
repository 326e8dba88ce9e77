use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vroc_core::io::{run, AlgorithmFilter, BootstrapSettings, InferenceSettings, RunConfig};
use vroc_core::simulation::{run_experiment, DgpKind, ExperimentConfig, OracleSettings, TruthOracle};
use vroc_core::{Error, Ranking, Result, Subset};

mod reference;

/// Variable importance of selection and ranking algorithms.
#[derive(Parser)]
#[command(name = "vroc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate VROC curves, uniform bands and AUVROC for every ranking in the config.
    RankEval(RunArgs),
    /// Estimate importance and PPSV for every selection in the config.
    SelectEval(RunArgs),
    /// Run all rankings and test pairwise equality of their VROC curves.
    Compare(RunArgs),
    /// Run a Monte Carlo experiment on a built-in design.
    Simulate(SimulateArgs),
    /// Print population importances for a built-in design.
    Oracle(OracleArgs),
    /// Print the configuration reference with every default value.
    Reference,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.csv and report.json.
    #[arg(long, default_value = "vroc-sim")]
    output: PathBuf,
    /// Include wall-clock times in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    Illustrative,
    Main,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    dgp: Design,
    /// Comma-separated 1-based covariate indices removed together.
    #[arg(long, conflicts_with = "ranking")]
    subset: Option<String>,
    /// Comma-separated 1-based ranking; prints every prefix and the AUVROC.
    #[arg(long)]
    ranking: Option<String>,
    /// Outer Monte Carlo draws (conditional Monte Carlo designs only).
    #[arg(long, default_value_t = OracleSettings::default().outer_draws)]
    outer: usize,
    /// Inner draws per outer draw.
    #[arg(long, default_value_t = OracleSettings::default().inner_draws)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run_pipeline(args: &RunArgs, filter: AlgorithmFilter, need_pairs: bool) -> Result<serde_json::Value> {
    let cfg = load_run(args)?;
    if need_pairs && cfg.algorithms.iter().filter(|a| a.is_ranking()).count() < 2 {
        return Err(Error::Config("compare needs at least two rankings".into()));
    }
    let out = run(&cfg, filter)?;
    let mut files = vec![vroc_core::io::VROC_CSV, vroc_core::io::SUMMARY_JSON];
    if cfg.bootstrap.as_ref().is_some_and(|b| b.export_draws) {
        files.push(vroc_core::io::BOOTSTRAP_CSV);
    }
    let mut report = json!({
        "output_dir": cfg.output_dir,
        "files": files,
        "algorithms": out.bundle.algorithms.iter().map(|a| &a.name).collect::<Vec<_>>(),
    });
    if need_pairs {
        report["comparisons"] = serde_json::to_value(&out.bundle.comparisons)?;
    }
    Ok(report)
}

fn simulate(args: &SimulateArgs) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = run_experiment(&cfg)?;
    std::fs::create_dir_all(&args.output)?;
    write(&args.output.join("report.csv"), report.to_csv(args.timings)?)?;
    write(&args.output.join("report.json"), report.to_json(args.timings)? + "\n")?;
    let flagged: Vec<_> = report
        .cells
        .iter()
        .filter(|c| c.flagged)
        .map(|c| (c.n, c.statistic.clone()))
        .collect();
    Ok(json!({ "output_dir": args.output, "cells": report.cells.len(), "flagged": flagged }))
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(Error::from)
}

fn parse_indices(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<usize>() {
                Ok(j) if j >= 1 => Ok(j - 1),
                _ => Err(Error::InvalidArgument(format!("'{t}' is not a 1-based index"))),
            }
        })
        .collect()
}

fn oracle(args: &OracleArgs) -> Result<serde_json::Value> {
    let kind = match args.dgp {
        Design::Illustrative => DgpKind::Illustrative,
        Design::Main => DgpKind::Main,
    };
    let settings = OracleSettings {
        outer_draws: args.outer,
        inner_draws: args.inner,
        seed: args.seed,
        ..OracleSettings::default()
    };
    let o = TruthOracle::new(kind, settings);
    let p = kind.p();
    if let Some(r) = &args.ranking {
        let ranking = Ranking::new(parse_indices(r)?, p)?;
        let entries = (1..=p)
            .map(|j| o.entry(&ranking.prefix(j)?))
            .collect::<Result<Vec<_>>>()?;
        let seq: Vec<f64> = entries.iter().map(|e| e.psi).collect();
        return Ok(json!({
            "dgp": kind.name(),
            "ranking": ranking.to_string(),
            "v_full": o.v_full(),
            "prefixes": entries,
            "auvroc": vroc_core::auvroc(&seq)?,
        }));
    }
    let subset = match &args.subset {
        Some(s) => Subset::new(parse_indices(s)?, p)?,
        None => return Err(Error::InvalidArgument("give --subset or --ranking".into())),
    };
    Ok(json!({ "dgp": kind.name(), "entry": o.entry(&subset)? }))
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::RankEval(a) => run_pipeline(a, AlgorithmFilter::Rankings, false),
        Command::SelectEval(a) => run_pipeline(a, AlgorithmFilter::Selections, false),
        Command::Compare(a) => run_pipeline(a, AlgorithmFilter::Rankings, true),
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
        Command::Reference => {
            print!(
                "{}",
                reference::render(
                    &InferenceSettings::default(),
                    &default_bootstrap(),
                    &OracleSettings::default()
                )
            );
            Ok(serde_json::Value::Null)
        }
    }
}

fn default_bootstrap() -> BootstrapSettings {
    toml::from_str("").expect("bootstrap defaults parse")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
            if let Error::Ingestion { row, column, .. } = &e {
                body["row"] = json!(row);
                body["column"] = json!(column);
            }
            eprintln!("{}", json!({ "error": body }));
            ExitCode::FAILURE
        }
    }
}

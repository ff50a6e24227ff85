use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gcov_cli::commands::{self, Ctx};
use gcov_cli::config::require_seed;
use gcov_cli::empirical;
use gcov_cli::montecarlo::{self, Experiment};
use serde_json::Value;

/// GCov estimation, specification tests, model selection and Monte Carlo
/// experiments for MAR and DAR models.
#[derive(Debug, Parser)]
#[command(name = "gcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the JSON and CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Replication factor for montecarlo, in (0, 1].
    #[arg(long, global = true, default_value_t = 1.0)]
    scale: f64,
    /// Simulate MAR specifications whose roots lie on the wrong side.
    #[arg(long, global = true)]
    allow_infeasible: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a MAR or DAR series
    Simulate,
    /// Fit a model by GCov or constrained GCov
    Estimate,
    /// Portmanteau, NLSD or nested Wald test
    Test,
    /// Select MAR(r, s) orders
    SelectMar,
    /// Select DAR(p, q) orders
    SelectDar,
    /// Pseudo-true values of a misspecified MAR
    Binding,
    /// Run one Monte Carlo experiment
    Montecarlo {
        #[arg(value_enum)]
        experiment: Experiment,
    },
    /// MAR analysis of the detrended producer price index
    ReplicatePpides,
    /// DAR(1) analysis of the differenced 3-month T-bill rate
    ReplicateTb3ms,
}

fn read_config(path: Option<&PathBuf>) -> Result<Value> {
    let Some(p) = path else { return Ok(Value::Object(Default::default())) };
    let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {} is not valid JSON: {e}", p.display()))
}

fn run(cli: Cli) -> Result<()> {
    let raw = read_config(cli.config.as_ref())?;
    let ctx = Ctx { seed: cli.seed, out: cli.out.clone(), scale: cli.scale, allow_infeasible: cli.allow_infeasible };
    let artifacts = match cli.command {
        Command::Simulate => commands::simulate(raw, &ctx)?,
        Command::Estimate => commands::estimate(raw, &ctx)?,
        Command::Test => commands::test(raw, &ctx)?,
        Command::SelectMar => commands::select_mar_cmd(raw, &ctx)?,
        Command::SelectDar => commands::select_dar_cmd(raw, &ctx)?,
        Command::Binding => commands::binding(raw, &ctx)?,
        Command::Montecarlo { experiment } => {
            let from_config = raw.get("seed").and_then(Value::as_u64);
            let seed = require_seed(ctx.seed, from_config)?;
            vec![montecarlo::run(experiment, ctx.scale, seed)?]
        }
        Command::ReplicatePpides => empirical::replicate_ppides(raw, &ctx)?,
        Command::ReplicateTb3ms => empirical::replicate_tb3ms(raw, &ctx)?,
    };
    for a in &artifacts {
        let (json, csv) = a.write(&ctx.out)?;
        println!("{}\n{}", json.display(), csv.display());
        for n in &a.notes {
            eprintln!("note: {n}");
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

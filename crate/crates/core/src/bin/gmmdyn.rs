use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmmdyn::asymptotics::classify_regime;
use gmmdyn::config::parse_config;
use gmmdyn::experiment::{compare, run_experiment, sweep};
use gmmdyn::ode::Metric;

#[derive(Parser)]
#[command(version, about = "Streaming SGD on Gaussian mixtures and its deterministic limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run { config: PathBuf },
    /// Distance between two curve CSVs, per column.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "sup", value_parser = parse_metric)]
        metric: Metric,
    },
    /// Classify the power-law regime for spectrum exponent alpha and mean
    /// exponent beta.
    Regime {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Concentration sweep over `analysis.concentration.dims`.
    Sweep { config: PathBuf },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s.to_ascii_lowercase().as_str() {
        "sup" => Ok(Metric::Sup),
        "l2" => Ok(Metric::L2),
        _ => Err(format!("unknown metric `{s}` (expected sup or l2)")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> gmmdyn::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let manifest = run_experiment(&cfg)?;
            for f in &manifest.files {
                println!("{}  {}", f.sha256, cfg.output.dir.join(&f.path).display());
            }
            if manifest.ok {
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &manifest.violations {
                    eprintln!("violation: {v}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Compare { a, b, metric } => {
            for (name, value) in compare(&a, &b, metric)? {
                println!("{name}\t{value:e}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Regime { alpha, beta } => {
            let report = classify_regime(alpha, beta)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config } => {
            let cfg = parse_config(&config)?;
            let tables = sweep(&cfg)?;
            std::fs::create_dir_all(&cfg.output.dir)
                .map_err(|e| gmmdyn::Error::Io { path: cfg.output.dir.clone(), source: e })?;
            let path = cfg.output.dir.join("concentration.json");
            std::fs::write(&path, serde_json::to_string_pretty(&tables)?)
                .map_err(|e| gmmdyn::Error::Io { path: path.clone(), source: e })?;
            for (k, table) in tables.iter().enumerate() {
                println!("schedule {k}");
                println!("{:>8}  {:>12}  errors", "d", "median");
                for row in &table.rows {
                    println!("{:>8}  {:>12.4e}  {:?}", row.dim, row.median, row.errors);
                }
                match table.slope {
                    Some(s) => println!("slope of log error vs log d: {s:.3}"),
                    None => println!("slope: n/a"),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

//! Experiment runner. Subcommands: gen-data, inject-noise, train, eval,
//! report. Exit codes: 0 success, 1 validation error, 2 missing input.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pnal_core::experiment::{
    cmd_eval, cmd_gen_data, cmd_inject_noise, cmd_report, cmd_train, ExperimentConfig, Method,
};
use pnal_core::Error;

#[derive(Parser)]
#[command(name = "pnal", version, about = "Noise-adaptive point-cloud segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark scenes as PNTS files plus a split manifest.
    GenData(Common),
    /// Corrupt the train-split labels and write LBLS sidecars plus a summary.
    InjectNoise(Common),
    /// Train a model and write checkpoint, metrics CSV, optional snapshots.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training method.
        #[arg(long, default_value = "pnal")]
        method: String,
    },
    /// Evaluate a checkpoint on one data split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Parameter checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to evaluate: train or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Compare metrics CSVs; inputs are name=path pairs.
    Report {
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Inputs as name=path, e.g. ce=runs/ce/metrics.csv.
        #[arg(required = false)]
        inputs: Vec<String>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_toml_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(common) => {
            let cfg = load_config(&common)?;
            let written = cmd_gen_data(&cfg, &common.out)?;
            println!("wrote {} scene files to {}", written.len(), common.out.display());
        }
        Command::InjectNoise(common) => {
            let cfg = load_config(&common)?;
            let outcomes = cmd_inject_noise(&cfg, &common.out)?;
            let mean_rate: f64 =
                outcomes.iter().map(|o| o.instance_rate).sum::<f64>() / outcomes.len() as f64;
            println!(
                "corrupted {} scenes, mean instance noise rate {:.4}",
                outcomes.len(),
                mean_rate
            );
            if outcomes.iter().any(|o| o.clamped) {
                eprintln!("warning: requested tau was infeasible for some scenes; rate clamped");
            }
        }
        Command::Train { common, method } => {
            let cfg = load_config(&common)?;
            let method: Method = method.parse()?;
            let outputs = cmd_train(&cfg, method, &common.out)?;
            let last = outputs.log.last().expect("at least one epoch");
            println!(
                "method {} finished: test oa {:.4}, test miou {:.4} ({} epochs)",
                method.name(),
                last.test_oa,
                last.test_miou,
                outputs.log.len()
            );
            println!("checkpoint: {}", outputs.checkpoint.display());
            println!("metrics:    {}", outputs.metrics.display());
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let cfg = load_config(&common)?;
            let report = cmd_eval(&cfg, &checkpoint, &split, &common.out)?;
            println!(
                "split {}: oa {:.6}, miou {:.6}",
                report.split, report.oa, report.miou
            );
        }
        Command::Report { out, inputs } => {
            let parsed: Vec<(String, PathBuf)> = inputs
                .iter()
                .map(|s| match s.split_once('=') {
                    Some((name, path)) => Ok((name.to_string(), PathBuf::from(path))),
                    None => Err(Error::InvalidConfig(format!(
                        "report input {s:?} must be name=path"
                    ))),
                })
                .collect::<Result<_, _>>()?;
            let outputs = cmd_report(&parsed, &out)?;
            print!("{}", outputs.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::MissingInput(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

//! Thin CLI over the library: ingest, synthesize, train, evaluate, compare,
//! report. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric
//! divergence.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use scalebench::commands;
use scalebench::trace::SplitLabel;

#[derive(Parser)]
#[command(name = "scalebench", version, about = "Autoscaling workbench: simulated serverless cluster with RL and reactive controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV invocation log into a canonical trace file
    Ingest {
        /// CSV input: `minute,function,count` or `timestamp,function[,duration]`
        #[arg(long)]
        input: PathBuf,
        /// Output trace file (.json)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        days: usize,
        #[arg(long, default_value_t = 5)]
        train_days: usize,
        #[arg(long, default_value_t = 500)]
        steps_per_day: u32,
    },
    /// Generate the synthetic diurnal+burst trace
    Synthesize {
        /// Optional run config supplying the [synth] and [trace] sections
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output trace file (.json)
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured agent and evaluate it on the test split
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with exploration disabled
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint file (not needed for static_hpa)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split to replay: test (default) or train
        #[arg(long, default_value = "test")]
        split: String,
        /// Permit evaluation on the training split
        #[arg(long, default_value_t = false)]
        allow_train_split: bool,
    },
    /// Join the summaries of several runs into a comparison table
    Compare {
        /// Completed run directories (each with a summary.json)
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for compare.csv and compare.md
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Regenerate summary and distribution files from a run's series.csv
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn run(cli: Cli) -> scalebench::Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            out,
            seed,
            days,
            train_days,
            steps_per_day,
        } => commands::cmd_ingest(&input, &out, seed, days, train_days, steps_per_day),
        Command::Synthesize { config, seed, out } => {
            commands::cmd_synthesize(config.as_deref(), seed, &out)
        }
        Command::Train { config, seed, out } => {
            let dir = commands::cmd_train(&config, seed, out)?;
            println!("run complete: {}", dir.display());
            Ok(())
        }
        Command::Evaluate {
            config,
            checkpoint,
            seed,
            out,
            split,
            allow_train_split,
        } => {
            let split = match split.as_str() {
                "test" => SplitLabel::Test,
                "train" => SplitLabel::Train,
                other => {
                    return Err(scalebench::Error::Usage(format!(
                        "unknown split `{other}` (expected test or train)"
                    )))
                }
            };
            let dir = commands::cmd_evaluate(
                &config,
                checkpoint,
                seed,
                out,
                split,
                allow_train_split,
            )?;
            println!("evaluation complete: {}", dir.display());
            Ok(())
        }
        Command::Compare { runs, out } => {
            commands::cmd_compare(&runs, &out)?;
            println!("comparison written to {}", out.display());
            Ok(())
        }
        Command::Report { run } => commands::cmd_report(&run),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

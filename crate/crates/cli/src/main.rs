//! `holorank`: train, evaluate and apply answer rankers from the shell.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holorank::bench::BenchConfig;
use holorank::model::Architecture;

use crate::config::{FlagOverrides, Precision};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "holorank", version, about = "Answer ranking with holographic composition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// TOML configuration with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set model.lstm_dim=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// hdlstm, ntnlstm or concatlstm.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    precision: Option<Precision>,
}

impl RunFlags {
    fn resolve(&self) -> Result<config::RunManifest, CliError> {
        let flags = FlagOverrides {
            seed: self.seed,
            arch: self.arch.clone(),
            train: self.train.clone(),
            dev: self.dev.clone(),
            test: self.test.clone(),
            embeddings: self.embeddings.clone(),
            out: self.out.clone(),
            workers: self.workers,
            precision: self.precision,
        };
        config::resolve(self.config.as_deref(), &self.sets, &flags)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, keeping the best checkpoints by dev MAP.
    Train(RunFlags),
    /// Score a labeled dataset with a checkpoint and write a run file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled dataset (TSV or JSONL).
        #[arg(long)]
        test: PathBuf,
        /// Where to write the run; defaults to `<out>/eval.run`.
        #[arg(long)]
        run_file: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Fail unless the checkpoint holds this architecture.
        #[arg(long)]
        arch: Option<Architecture>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = Precision::F64)]
        precision: Precision,
        #[arg(long, default_value = "holorank")]
        tag: String,
    },
    /// Rank the candidates in a file for one question.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        question: String,
        /// One candidate per line, optionally `id<TAB>text`.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Print the parameter breakdown of the configured model.
    CountParams(RunFlags),
    /// Time the compositional operators over a range of widths.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048, 4096, 8192, 16384])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        slices: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 30)]
        repetitions: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(flags) => commands::train(&flags.resolve()?),
        Command::Evaluate {
            checkpoint,
            test,
            run_file,
            out,
            arch,
            workers,
            precision,
            tag,
        } => commands::evaluate_cmd(&commands::EvaluateArgs {
            checkpoint,
            dataset: test,
            run_file: run_file.unwrap_or_else(|| out.join("eval.run")),
            arch,
            workers: workers.max(1),
            precision,
            tag,
        }),
        Command::Rank {
            checkpoint,
            question,
            candidates,
            workers,
            precision,
        } => commands::rank(&commands::RankArgs {
            checkpoint,
            question,
            candidates,
            workers: workers.max(1),
            precision,
        }),
        Command::CountParams(flags) => commands::count_params(&flags.resolve()?),
        Command::Bench {
            dims,
            slices,
            hidden,
            repetitions,
            warmup,
            json,
        } => {
            let cfg = BenchConfig {
                dims,
                slices,
                hidden,
                repetitions,
                warmup,
                ..Default::default()
            };
            commands::bench(&cfg, json.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
